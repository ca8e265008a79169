"""Synthetic ventilation/perfusion cases and the Shepp-Logan phantom.

Each case holds six views per modality. Every view is an independently
perturbed copy of one two-lung geometry built from superposed ellipses.
Perfusion carries circular defects that ventilation lacks (the mismatch
pattern); ventilation optionally carries throat, stomach and hot-spot
artifacts, and is offset from perfusion by a known transform.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .imaging import GrayImage
from .registration import TransformParams, apply_transform

__all__ = [
    "VIEWS", "CLASSES", "PhantomSpec", "CaseStudy", "PhantomError",
    "generate_case", "generate_dataset", "shepp_logan", "label_for_fraction",
    "default_class_specs",
]

VIEWS = ("ant", "post", "llat", "rlat", "lpo", "rpo")
CLASSES = ("negative", "intermediate", "high")
LABEL_TOKENS = {"negative": "neg", "intermediate": "int", "high": "high"}
TOKEN_LABELS = {v: k for k, v in LABEL_TOKENS.items()}

# lung field brightness (before noise) and artifact levels, 8-bit scale
LUNG_LEVEL = 150.0
LUNG_CORE_BOOST = 20.0
THROAT_LEVEL = 170.0
STOMACH_LEVEL = 190.0
HOTSPOT_LEVEL = 250.0
INTERMEDIATE_MAX_FRACTION = 0.05


class PhantomError(ValueError):
    """A phantom specification cannot be realised."""


@dataclass(frozen=True)
class PhantomSpec:
    image_size: int = 64
    defect_count: int = 0
    defect_radius_range: tuple = (3.0, 5.0)
    defect_depth: float = 0.6
    throat: bool = False
    stomach: bool = False
    hotspot: bool = False
    misalignment: TransformParams = field(default_factory=TransformParams)
    # when set, each case draws its own misalignment uniformly within
    # +/- these limits for (scale - 1, rotation, tx, ty); overrides `misalignment`
    misalignment_jitter: tuple | None = None
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 16:
            raise ValueError("image_size must be >= 16")
        if self.defect_count < 0:
            raise ValueError("defect_count must be >= 0")
        lo, hi = self.defect_radius_range
        if not 0 < lo <= hi:
            raise ValueError("defect_radius_range must satisfy 0 < low <= high")
        if not 0 <= self.defect_depth <= 1:
            raise ValueError("defect_depth must be in [0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")


@dataclass(frozen=True, eq=False)
class CaseStudy:
    ventilation: tuple
    perfusion: tuple
    label: str
    # ground truth kept by the generator; None for cases loaded from disk
    defect_masks: tuple | None = None
    lung_masks: tuple | None = None
    case_id: str = ""

    def __post_init__(self):
        if len(self.ventilation) != 6 or len(self.perfusion) != 6:
            raise ValueError("a case needs exactly 6 views per modality")
        shape = self.ventilation[0].shape
        if any(im.shape != shape for im in (*self.ventilation, *self.perfusion)):
            raise ValueError("all views in a case must share dimensions")
        if self.label not in CLASSES:
            raise ValueError(f"label must be one of {CLASSES}")
        object.__setattr__(self, "ventilation", tuple(self.ventilation))
        object.__setattr__(self, "perfusion", tuple(self.perfusion))

    @property
    def defect_fraction(self):
        if self.defect_masks is None:
            return None
        d = sum(int(m.sum()) for m in self.defect_masks)
        a = sum(int(m.sum()) for m in self.lung_masks)
        return d / a

    def __eq__(self, other):
        if not isinstance(other, CaseStudy):
            return NotImplemented
        return (self.label == other.label
                and all(a == b for a, b in zip(self.ventilation, other.ventilation))
                and all(a == b for a, b in zip(self.perfusion, other.perfusion)))

    __hash__ = None


def label_for_fraction(fraction: float) -> str:
    if fraction <= 0:
        return "negative"
    if fraction <= INTERMEDIATE_MAX_FRACTION:
        return "intermediate"
    return "high"


def _ellipse(xx, yy, x0, y0, a, b, theta_deg=0.0):
    th = np.radians(theta_deg)
    c, s = np.cos(th), np.sin(th)
    u = (xx - x0) * c + (yy - y0) * s
    v = -(xx - x0) * s + (yy - y0) * c
    return (u / a) ** 2 + (v / b) ** 2 <= 1.0


def _grid(n):
    # normalised coordinates in [-1, 1], y pointing down
    c = (np.arange(n) + 0.5) / n * 2 - 1
    return np.meshgrid(c, c)


# Modified (higher contrast) Shepp-Logan: x0, y0, a, b, theta, additive value
_SHEPP_LOGAN = (
    (0.0, 0.0, 0.69, 0.92, 0.0, 1.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -0.8),
    (0.22, 0.0, 0.11, 0.31, -18.0, -0.2),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -0.2),
    (0.0, 0.35, 0.21, 0.25, 0.0, 0.1),
    (0.0, 0.1, 0.046, 0.046, 0.0, 0.1),
    (0.0, -0.1, 0.046, 0.046, 0.0, 0.1),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 0.1),
    (0.0, -0.605, 0.023, 0.023, 0.0, 0.1),
    (0.06, -0.605, 0.023, 0.046, 0.0, 0.1),
)


def shepp_logan(size: int = 256) -> GrayImage:
    """The 10-ellipse Shepp-Logan head phantom scaled to ``[0, 255]``.

    Uses the higher-contrast intensity set so the skull ring, brain and
    internal structures are all distinguishable after 8-bit quantisation.
    Image rows run top to bottom, so ``y`` is flipped relative to the usual
    mathematical definition.
    """
    if size < 16:
        raise ValueError("size must be >= 16")
    xx, yy = _grid(size)
    yy = -yy
    img = np.zeros((size, size))
    for x0, y0, a, b, theta, value in _SHEPP_LOGAN:
        img[_ellipse(xx, yy, x0, y0, a, b, theta)] += value
    img = np.clip(img, 0, None)
    return GrayImage(img / img.max() * 255.0)


# ---------------------------------------------------------------------------
# lung phantoms

def _rng(seed, *stream):
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, *stream])


def _stream_id(name):
    return zlib.crc32(name.encode())


def _lung_geometry(rng):
    """Base two-lung layout in normalised coordinates."""
    return {
        "right": (-0.36, 0.02, 0.25, 0.55, 4.0),
        "left": (0.37, 0.05, 0.23, 0.52, -4.0),
        "jitter": rng.normal(0, 1, size=8),
    }


def _view_lungs(n, geom, view_rng):
    xx, yy = _grid(n)
    base = geom["jitter"] * 0.015
    fields = np.zeros((n, n))
    mask = np.zeros((n, n), bool)
    for side, offset in (("right", 0), ("left", 4)):
        x0, y0, a, b, th = geom[side]
        j = base[offset:offset + 4] + view_rng.normal(0, 0.01, size=4)
        x0, y0, a, b = x0 + j[0], y0 + j[1], a * (1 + j[2]), b * (1 + j[3])
        outer = _ellipse(xx, yy, x0, y0, a, b, th)
        core = _ellipse(xx, yy, x0, y0 - 0.05, 0.6 * a, 0.7 * b, th)
        fields += outer * LUNG_LEVEL + core * LUNG_CORE_BOOST
        mask |= outer
    return fields, mask


def _place_defects(lung_mask, count, rlo, rhi, rng, n):
    """Circular defect discs inside the lung field.

    A disc lying fully inside the lung is preferred; failing that, one with at
    least half its area inside is accepted and clipped to the lung.
    """
    defects = np.zeros_like(lung_mask)
    if count == 0:
        return defects
    yy, xx = np.mgrid[0:n, 0:n]
    inside = np.argwhere(lung_mask)
    for _ in range(count):
        r = rng.uniform(rlo, rhi)
        for attempt in range(400):
            cy, cx = inside[rng.integers(len(inside))] + rng.random(2) - 0.5
            disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
            if not disc.any():
                continue
            if attempt < 200:
                ok = not (disc & ~lung_mask).any()
            else:
                ok = 2 * (disc & lung_mask).sum() >= disc.sum()
            if ok:
                defects |= disc & lung_mask
                break
        else:
            raise PhantomError(f"defect of radius {r:.1f} does not fit in the lung field")
    return defects


def _artifacts(n, spec, rng, lung_mask):
    xx, yy = _grid(n)
    extra = np.zeros((n, n))
    if spec.throat:
        throat = (np.abs(xx - 0.01) <= 0.05) & (yy >= -0.98) & (yy <= -0.55)
        extra = np.where(throat, THROAT_LEVEL, extra)
    if spec.stomach:
        stomach = _ellipse(xx, yy, 0.45, 0.78, 0.16, 0.1)
        extra = np.where(stomach & ~lung_mask, STOMACH_LEVEL, extra)
    hot = None
    if spec.hotspot:
        inside = np.argwhere(lung_mask)
        hot = tuple(inside[rng.integers(len(inside))])
    return extra, hot


def generate_case(spec: PhantomSpec, case_id: str = "") -> CaseStudy:
    """Render one V/Q case from ``spec``; fully determined by ``spec.seed``.

    The label follows the defect area summed over views relative to the
    summed lung area: none is negative, up to 5% intermediate, beyond that high.
    """
    n = spec.image_size
    geom = _lung_geometry(_rng(spec.seed, _stream_id("geometry")))
    if spec.misalignment_jitter is not None:
        js, jr, jx, jy = spec.misalignment_jitter
        u = _rng(spec.seed, _stream_id("misalignment")).uniform(-1, 1, size=4)
        shift = TransformParams(1 + js * u[0], jr * u[1], jx * u[2], jy * u[3])
    else:
        shift = spec.misalignment
    vent, perf, dmasks, lmasks = [], [], [], []
    for vi, _view in enumerate(VIEWS):
        view_rng = _rng(spec.seed, _stream_id("view"), vi)
        defect_rng = _rng(spec.seed, _stream_id("defects"), vi)
        art_rng = _rng(spec.seed, _stream_id("artifacts"), vi)
        noise_rng = _rng(spec.seed, _stream_id("noise"), vi)

        lungs, lung_mask = _view_lungs(n, geom, view_rng)
        defects = _place_defects(lung_mask, spec.defect_count, *spec.defect_radius_range,
                                 defect_rng, n)
        q = lungs * np.where(defects, 1.0 - spec.defect_depth, 1.0)
        extra, hot = _artifacts(n, spec, art_rng, lung_mask)
        v = np.maximum(lungs, extra)
        if hot is not None:
            v[hot] = HOTSPOT_LEVEL
        v = apply_transform(GrayImage.clipped(v), shift).pixels
        if spec.noise_sigma > 0:
            v = v + noise_rng.normal(0, spec.noise_sigma, size=v.shape)
            q = q + noise_rng.normal(0, spec.noise_sigma, size=q.shape)
        vent.append(GrayImage.clipped(v))
        perf.append(GrayImage.clipped(q))
        dmasks.append(defects)
        lmasks.append(lung_mask)

    fraction = sum(int(d.sum()) for d in dmasks) / sum(int(m.sum()) for m in lmasks)
    return CaseStudy(tuple(vent), tuple(perf), label_for_fraction(fraction),
                     tuple(dmasks), tuple(lmasks), case_id)


def default_class_specs(image_size=64, depth=0.6, noise_sigma=8.0, artifacts=True):
    """Per-class specs whose defect burdens land in the intended label band.

    Defect radii are given for 64-pixel views and scale with ``image_size``.
    """
    common = dict(image_size=image_size, defect_depth=depth, noise_sigma=noise_sigma,
                  throat=artifacts, stomach=artifacts, hotspot=artifacts,
                  misalignment_jitter=(0.04, 4.0, 3.0, 3.0))
    f = image_size / 64
    return {
        "negative": PhantomSpec(defect_count=0, **common),
        "intermediate": PhantomSpec(defect_count=1, defect_radius_range=(2.5 * f, 3.5 * f),
                                    **common),
        "high": PhantomSpec(defect_count=3, defect_radius_range=(4.5 * f, 6.0 * f), **common),
    }


def generate_dataset(specs: dict, counts, seed: int = 0) -> list:
    """Generate ``counts[c]`` cases per class and shuffle them.

    ``specs`` maps class name to a :class:`PhantomSpec` (its seed is ignored);
    ``counts`` is a mapping or a (negative, intermediate, high) sequence. Each
    case seed derives from ``(seed, class, index)``. A generated case whose
    defect burden falls outside the requested class raises :class:`PhantomError`.
    """
    if not isinstance(counts, dict):
        counts = dict(zip(CLASSES, counts))
    if any(c < 0 for c in counts.values()):
        raise ValueError("counts must be >= 0")
    cases = []
    for ci, cls in enumerate(CLASSES):
        for i in range(counts.get(cls, 0)):
            case_seed = int(np.random.SeedSequence([seed, ci, i]).generate_state(1)[0])
            spec = _replace_seed(specs[cls], case_seed)
            case = generate_case(spec, case_id=f"{LABEL_TOKENS[cls]}{i:04d}")
            if case.label != cls:
                raise PhantomError(
                    f"spec for {cls} produced a {case.label} case (defect fraction "
                    f"{case.defect_fraction:.4f})")
            cases.append(case)
    order = np.random.default_rng([seed, _stream_id("shuffle")]).permutation(len(cases))
    return [cases[i] for i in order]


def _replace_seed(spec, seed):
    from dataclasses import replace
    return replace(spec, seed=seed)
