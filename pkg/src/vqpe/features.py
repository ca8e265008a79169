"""Subtraction images, PCA with retained-variability control, SoF input
selection and feature standardisation."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .imaging import GrayImage, resize_array

__all__ = [
    "SubtractionImage", "PcaModel", "SofSelection", "FeatureScaler",
    "subtract", "defect_magnitude", "case_vector", "pca_fit", "pca_project",
    "pca_reconstruct", "sof_delta", "sof_scores", "sof_select", "scaler_fit",
    "scaler_apply", "VR_GRID",
]

log = logging.getLogger(__name__)

VR_GRID = (0.70, 0.75, 0.80, 0.85, 0.90, 0.95)


def _fmt(values):
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def _parse_floats(line):
    return np.array([float(t) for t in line.split()], dtype=np.float64)


# ---------------------------------------------------------------------------
# subtraction

@dataclass(frozen=True, eq=False)
class SubtractionImage:
    """Perfusion minus ventilation; negative where ventilation exceeds perfusion."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def shape(self):
        return self.values.shape


def subtract(perfusion: GrayImage, ventilation: GrayImage) -> SubtractionImage:
    if perfusion.shape != ventilation.shape:
        raise ValueError(f"dimension mismatch: {perfusion.shape} vs {ventilation.shape}")
    return SubtractionImage(perfusion.pixels - ventilation.pixels)


def defect_magnitude(sub: SubtractionImage) -> float:
    """Sum of ``|value|`` over the pixels where the subtraction is negative."""
    v = sub.values
    return float(-v[v < 0].sum())


def case_vector(subtractions, image_size: int) -> np.ndarray:
    """Resize each view's subtraction image to ``image_size`` squared and
    concatenate the flattened views (row-major, in view order)."""
    parts = []
    for sub in subtractions:
        v = sub.values if isinstance(sub, SubtractionImage) else np.asarray(sub, float)
        if v.shape != (image_size, image_size):
            v = resize_array(v, image_size, image_size)
        parts.append(v.ravel())
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# PCA

@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray            # (d,)
    eigenvectors: np.ndarray    # (m, d), rows orthonormal, descending eigenvalue
    eigenvalues: np.ndarray     # (r,), all sample-covariance eigenvalues, descending
    n_components: int
    vr: float

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def retained_fraction(self):
        total = self.eigenvalues.sum()
        return float(self.eigenvalues[:self.n_components].sum() / total)

    def n_components_for(self, vr):
        return _components_for(self.eigenvalues, vr)

    def truncated(self, vr):
        """Same basis, fewer components, for a lower retained variability."""
        m = self.n_components_for(vr)
        if m > self.eigenvectors.shape[0]:
            raise ValueError("model does not hold enough eigenvectors for this vr")
        return PcaModel(self.mean, self.eigenvectors[:m], self.eigenvalues, m, vr)

    def dumps(self) -> str:
        lines = [f"pca 1 {self.dim} {self.n_components} {len(self.eigenvalues)} {self.vr!r}",
                 _fmt(self.mean), _fmt(self.eigenvalues)]
        lines += [_fmt(row) for row in self.eigenvectors[:self.n_components]]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PcaModel":
        lines = text.splitlines()
        head = lines[0].split()
        if head[:2] != ["pca", "1"]:
            raise ValueError("not a version-1 PCA model")
        d, m, r, vr = int(head[2]), int(head[3]), int(head[4]), float(head[5])
        mean = _parse_floats(lines[1])
        eig = _parse_floats(lines[2]) if r else np.zeros(0)
        vecs = np.array([_parse_floats(l) for l in lines[3:3 + m]]).reshape(m, d)
        if mean.shape != (d,) or eig.shape != (r,):
            raise ValueError("PCA model dimensions do not match header")
        return cls(mean, vecs, eig, m, vr)


def _components_for(eigenvalues, vr):
    cum = np.cumsum(eigenvalues) / eigenvalues.sum()
    # guard the last step against round-off so vr=1 selects the full rank
    m = int(np.searchsorted(cum, vr - 1e-12) + 1)
    rank = int(np.count_nonzero(eigenvalues > 0))
    return min(m, rank)


def pca_fit(data, vr: float = 0.9) -> PcaModel:
    """PCA through the n x n Gram matrix of the centred samples.

    ``n_components`` is the smallest count whose cumulative share of the
    total variance reaches ``vr``. Only eigenvectors with nonzero eigenvalue
    can be recovered this way, so at most ``n - 1`` are stored.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two sample vectors")
    if not 0 < vr <= 1:
        raise ValueError("vr must be in (0, 1]")
    n = x.shape[0]
    mean = x.mean(axis=0)
    xc = x - mean
    gram = xc @ xc.T / (n - 1)
    w, v = np.linalg.eigh(gram)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    w = np.where(w < 0, 0.0, w)
    if w[0] <= 0:
        raise ValueError("zero total variance")
    # eigenvalues below round-off of the largest are rank deficiency, not signal
    w[w < w[0] * 1e-12] = 0.0
    rank = int(np.count_nonzero(w))
    vecs = (xc.T @ v[:, :rank]) / np.sqrt((n - 1) * w[:rank])
    # one Gram-Schmidt pass tidies orthonormality lost to round-off
    vecs, r = np.linalg.qr(vecs)
    vecs *= np.sign(np.diag(r))
    m = _components_for(w, vr)
    return PcaModel(mean, vecs.T.copy(), w, m, float(vr))


def pca_project(model: PcaModel, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.dim:
        raise ValueError(f"vector length {v.shape[-1]} does not match model dimension {model.dim}")
    return (v - model.mean) @ model.eigenvectors[:model.n_components].T


def pca_reconstruct(model: PcaModel, coeffs) -> np.ndarray:
    return np.asarray(coeffs) @ model.eigenvectors[:model.n_components] + model.mean


# ---------------------------------------------------------------------------
# statistical overlay function

def sof_delta(mu1, sigma1, mu2, sigma2):
    """``|mu1 - mu2| / ((sigma1 + sigma2) / 2)``.

    Zero spread gives ``inf`` for distinct means and 0 for equal ones.
    """
    mu1, mu2 = np.asarray(mu1, float), np.asarray(mu2, float)
    denom = (np.asarray(sigma1, float) + np.asarray(sigma2, float)) / 2
    diff = np.abs(mu1 - mu2)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = np.where(denom > 0, diff / np.where(denom > 0, denom, 1), np.where(diff > 0, np.inf, 0.0))
    return d if d.ndim else float(d)


@dataclass(frozen=True, eq=False)
class SofSelection:
    chosen: np.ndarray   # candidate indices, by descending score
    scores: np.ndarray   # score per candidate

    def dumps(self) -> str:
        return (f"sof 1 {len(self.scores)} {len(self.chosen)}\n"
                + " ".join(str(int(i)) for i in self.chosen) + "\n"
                + _fmt(self.scores) + "\n")

    @classmethod
    def loads(cls, text):
        lines = text.splitlines()
        head = lines[0].split()
        if head[:2] != ["sof", "1"]:
            raise ValueError("not a version-1 SoF selection")
        n, k = int(head[2]), int(head[3])
        chosen = np.array([int(t) for t in lines[1].split()], dtype=int)
        scores = _parse_floats(lines[2])
        if chosen.shape != (k,) or scores.shape != (n,):
            raise ValueError("SoF selection dimensions do not match header")
        return cls(chosen, scores)


def sof_scores(groups) -> np.ndarray:
    """Per-feature separation: the largest pairwise delta over class pairs.

    ``groups`` is a sequence of ``(n_c, n_features)`` arrays, one per class.
    """
    groups = [np.asarray(g, dtype=np.float64) for g in groups]
    if len(groups) < 2:
        raise ValueError("need at least two classes")
    if any(g.ndim != 2 or g.shape[0] < 2 for g in groups):
        raise ValueError("each class needs at least two samples")
    mus = [g.mean(axis=0) for g in groups]
    sds = [g.std(axis=0, ddof=1) for g in groups]
    best = np.zeros(groups[0].shape[1])
    for i in range(len(groups)):
        for j in range(i + 1, len(groups)):
            best = np.maximum(best, sof_delta(mus[i], sds[i], mus[j], sds[j]))
    return best


def sof_select(groups, n_inputs: int) -> SofSelection:
    scores = sof_scores(groups)
    if not 1 <= n_inputs <= scores.size:
        raise ValueError(f"n_inputs must be in [1, {scores.size}]")
    order = np.argsort(-scores, kind="stable")
    return SofSelection(order[:n_inputs].copy(), scores)


# ---------------------------------------------------------------------------
# scaling

@dataclass(frozen=True, eq=False)
class FeatureScaler:
    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray   # indices of input features that survived (nonzero std)

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        return (v[..., self.keep] - self.mean) / self.std

    def dumps(self):
        return (f"scaler 1 {len(self.keep)}\n" + " ".join(str(int(i)) for i in self.keep) + "\n"
                + _fmt(self.mean) + "\n" + _fmt(self.std) + "\n")

    @classmethod
    def loads(cls, text):
        lines = text.splitlines()
        head = lines[0].split()
        if head[:2] != ["scaler", "1"]:
            raise ValueError("not a version-1 scaler")
        keep = np.array([int(t) for t in lines[1].split()], dtype=int)
        return cls(_parse_floats(lines[2]), _parse_floats(lines[3]), keep)


def scaler_fit(training) -> FeatureScaler:
    """Per-feature mean and sample std; zero-spread features are dropped."""
    x = np.asarray(training, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need at least two training vectors")
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    keep = np.flatnonzero(std > 0)
    if keep.size < x.shape[1]:
        log.warning("dropping %d constant feature(s): %s", x.shape[1] - keep.size,
                    np.flatnonzero(std == 0).tolist())
    return FeatureScaler(mean[keep], std[keep], keep)


def scaler_apply(scaler: FeatureScaler, v):
    return scaler.apply(v)
