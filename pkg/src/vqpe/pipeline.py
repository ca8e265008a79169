"""End-to-end pipeline: preprocess, align, subtract, extract features, train
the committee and score it.

All randomness derives from one master seed through :func:`derive_seed`,
keyed by a stage name and an index, so any stage can be rerun on its own and
reproduce the same numbers.
"""
from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import bayesnet, evaluation, features
from .imaging import (GrayImage, HotspotParams, LungMask, fshs, remove_artifacts,
                      remove_hotspots, segment_lung, smooth)
from .features import VR_GRID
from .phantom import CLASSES, CaseStudy, PhantomSpec, default_class_specs, shepp_logan
from .registration import GAConfig, TransformParams, apply_transform, binarize, ga_align

log = logging.getLogger(__name__)

POSITIVE_CLASSES = ("intermediate", "high")


def derive_seed(master_seed: int, stage: str, index: int = 0) -> int:
    """Stable 32-bit seed for ``(master seed, stage name, index)``."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF, zlib.crc32(stage.encode()), index])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class PipelineConfig:
    # preprocessing
    hotspot_q: float = 3.0
    hotspot_perfusion: bool = False
    smooth_radius: int = 1
    segment_level: float = 0.35
    # alignment
    ga_population: int = 30
    ga_generations: int = 30
    ga_crossover_rate: float = 0.9
    ga_mutation_rate: float = 0.1
    ga_mutation_sigma: tuple = (0.02, 1.0, 1.0, 1.0)
    ga_elitism: int = 2
    ga_bounds: tuple = ((0.85, 1.15), (-10.0, 10.0), (-8.0, 8.0), (-8.0, 8.0))
    # features
    image_size: int = 64
    vr: float = 0.95
    n_inputs: int = 30
    # committee
    hmc_step_size: float = 0.08
    hmc_n_leapfrog: int = 50
    hmc_n_burnin: int = 500
    hmc_n_committee: int = 250
    hmc_thin: int = 4
    hmc_prior_alpha: float = 0.01
    hmc_noise_beta: float = 10.0
    # synthetic data
    phantom_size: int = 64
    defect_depth: float = 0.6
    noise_sigma: float = 8.0
    artifacts: bool = True
    n_negative: int = 76
    n_intermediate: int = 76
    n_high: int = 27
    # data handling
    train_fraction: float = 0.7
    master_seed: int = 0
    manifest: str = ""
    out_dir: str = "out"
    # sweep grid
    sweep_image_sizes: tuple = (16, 32, 64)
    sweep_n_inputs: tuple = (10, 20, 30)
    sweep_vrs: tuple = VR_GRID

    def __post_init__(self):
        if self.image_size < 1:
            raise ValueError("image_size must be >= 1")
        if not 0 < self.vr <= 1:
            raise ValueError("vr must be in (0, 1]")
        if self.n_inputs < 1:
            raise ValueError("n_inputs must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must be in (0, 1)")
        # embedded configs validate themselves
        HotspotParams(self.hotspot_q)
        self.ga_config(0)
        self.hmc_config(0)
        if self.smooth_radius < 0:
            raise ValueError("smooth_radius must be >= 0")
        if not 0 < self.segment_level < 1:
            raise ValueError("segment_level must be in (0, 1)")
        if min(self.n_negative, self.n_intermediate, self.n_high) < 0:
            raise ValueError("class counts must be >= 0")
        PhantomSpec(image_size=self.phantom_size, defect_depth=self.defect_depth,
                    noise_sigma=self.noise_sigma)

    def class_specs(self):
        return default_class_specs(self.phantom_size, self.defect_depth, self.noise_sigma,
                                   self.artifacts)

    @property
    def class_counts(self):
        return (self.n_negative, self.n_intermediate, self.n_high)

    def ga_config(self, seed) -> GAConfig:
        return GAConfig(population=self.ga_population, generations=self.ga_generations,
                        crossover_rate=self.ga_crossover_rate, mutation_rate=self.ga_mutation_rate,
                        mutation_sigma=tuple(self.ga_mutation_sigma), elitism=self.ga_elitism,
                        bounds=tuple(tuple(b) for b in self.ga_bounds), seed=seed)

    def hmc_config(self, seed) -> bayesnet.HmcConfig:
        return bayesnet.HmcConfig(step_size=self.hmc_step_size, n_leapfrog=self.hmc_n_leapfrog,
                                  n_burnin=self.hmc_n_burnin, n_committee=self.hmc_n_committee,
                                  thin=self.hmc_thin, prior_alpha=self.hmc_prior_alpha,
                                  noise_beta=self.hmc_noise_beta, seed=seed)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def with_updates(self, **kw):
        return replace(self, **kw)


# ---------------------------------------------------------------------------
# per-image and per-case stages

def preprocess_image(img: GrayImage, ventilation: bool, cfg: PipelineConfig):
    """Stretch, de-spike, smooth, segment and strip artifacts.

    Returns the cleaned image and its lung mask.
    """
    s = fshs(img)
    if ventilation or cfg.hotspot_perfusion:
        candidate = segment_lung(smooth(s, cfg.smooth_radius), cfg.segment_level)
        s = remove_hotspots(s, candidate, HotspotParams(cfg.hotspot_q))
        s = fshs(s)
    s = smooth(s, cfg.smooth_radius)
    mask = segment_lung(s, cfg.segment_level)
    return remove_artifacts(s, mask), mask


@dataclass(frozen=True, eq=False)
class PreparedCase:
    """Preprocessed views and masks of one case."""

    ventilation: tuple
    perfusion: tuple
    ventilation_masks: tuple
    perfusion_masks: tuple
    label: str
    case_id: str = ""


def preprocess_case(case: CaseStudy, cfg: PipelineConfig) -> PreparedCase:
    v = [preprocess_image(im, True, cfg) for im in case.ventilation]
    q = [preprocess_image(im, False, cfg) for im in case.perfusion]
    return PreparedCase(tuple(a for a, _ in v), tuple(a for a, _ in q),
                        tuple(m for _, m in v), tuple(m for _, m in q), case.label, case.case_id)


@dataclass(frozen=True, eq=False)
class AlignedCase:
    ventilation: tuple          # ventilation resampled onto perfusion
    perfusion: tuple
    transforms: tuple           # TransformParams per view
    fitness: tuple
    label: str
    case_id: str = ""

    def subtractions(self):
        return [features.subtract(q, v) for q, v in zip(self.perfusion, self.ventilation)]


def align_pair(ventilation: GrayImage, v_mask: LungMask, perfusion: GrayImage,
               q_mask: LungMask, ga: GAConfig):
    """Align one ventilation view onto its perfusion view via their binary masks."""
    result = ga_align(binarize(ventilation, v_mask), binarize(perfusion, q_mask), ga)
    return apply_transform(ventilation, result.params), result.params, result.fitness


def align_case(prep: PreparedCase, cfg: PipelineConfig, case_index: int) -> AlignedCase:
    moved, ts, fits = [], [], []
    for vi in range(6):
        ga = cfg.ga_config(derive_seed(cfg.master_seed, "align", case_index * 6 + vi))
        im, t, f = align_pair(prep.ventilation[vi], prep.ventilation_masks[vi],
                              prep.perfusion[vi], prep.perfusion_masks[vi], ga)
        moved.append(im)
        ts.append(t)
        fits.append(f)
    return AlignedCase(tuple(moved), prep.perfusion, tuple(ts), tuple(fits), prep.label, prep.case_id)


def process_cases(cases, cfg: PipelineConfig, index_offset=0):
    """Preprocess and align every case; index ``i`` seeds the GA streams."""
    return [align_case(preprocess_case(c, cfg), cfg, index_offset + i) for i, c in enumerate(cases)]


# ---------------------------------------------------------------------------
# features and classifier

@dataclass(frozen=True, eq=False)
class FeatureModel:
    """PCA basis, selected coefficients and scaler, fitted on training data."""

    pca: features.PcaModel
    sof: features.SofSelection
    scaler: features.FeatureScaler
    image_size: int

    def transform(self, vectors):
        coeffs = features.pca_project(self.pca, np.atleast_2d(vectors))
        return self.scaler.apply(coeffs[:, self.sof.chosen])


def fit_features(vectors, labels, image_size, vr, n_inputs) -> FeatureModel:
    x = np.asarray(vectors, dtype=np.float64)
    pca = features.pca_fit(x, vr)
    coeffs = features.pca_project(pca, x)
    labels = np.asarray(labels, dtype=object)
    groups = [coeffs[labels == c] for c in CLASSES if np.sum(labels == c) >= 2]
    k = min(n_inputs, pca.n_components)
    if k < n_inputs:
        log.info("only %d PCA components at vr=%.2f; selecting %d inputs instead of %d",
                 pca.n_components, vr, k, n_inputs)
    sof = features.sof_select(groups, k)
    scaler = features.scaler_fit(coeffs[:, sof.chosen])
    return FeatureModel(pca, sof, scaler, image_size)


def targets_for(labels):
    return np.array([bayesnet.TARGETS[l] for l in labels])


def case_vectors(aligned_cases, image_size):
    return np.array([features.case_vector(c.subtractions(), image_size) for c in aligned_cases])


@dataclass
class ExperimentResult:
    image_size: int
    n_inputs: int
    vr: float
    auc: float
    metrics: dict                 # class -> evaluation.Metrics
    accuracy: dict                # class -> fraction correct
    outputs: list                 # CommitteeOutput per validation case
    acceptance_rate: float
    n_components: int
    labels: list = field(default_factory=list)


def run_experiment(train_vectors, train_labels, val_vectors, val_labels, image_size,
                   n_inputs, vr, cfg: PipelineConfig, seed) -> ExperimentResult:
    fm = fit_features(train_vectors, train_labels, image_size, vr, n_inputs)
    xtr = fm.transform(train_vectors)
    committee = bayesnet.hmc_sample(xtr, targets_for(train_labels), cfg.hmc_config(seed))
    outs = bayesnet.committee_predict_many(committee, fm.transform(val_vectors))
    preds = [o.predicted_class for o in outs]
    scores = [o.mean for o in outs]
    positive = [l in POSITIVE_CLASSES for l in val_labels]
    auc = evaluation.roc(scores, positive).auc
    mets = {c: evaluation.metrics(preds, val_labels, c) for c in CLASSES}
    acc = evaluation.per_class_accuracy(preds, val_labels, CLASSES)
    return ExperimentResult(image_size, n_inputs, vr, auc, mets, acc, outs,
                            committee.acceptance_rate, fm.pca.n_components, list(val_labels))


SWEEP_HEADER = ["image_size", "n_inputs", "vr", "n_components", "auc"] + [
    f"{m}_{c}" for c in CLASSES for m in ("sens", "spec", "ppv", "npv")]


def _cell(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else format(v, ".6f")
    return str(v)


def result_row(r: ExperimentResult):
    row = [r.image_size, r.n_inputs, r.vr, r.n_components, r.auc]
    for c in CLASSES:
        m = r.metrics[c]
        row += [m.sensitivity, m.specificity, m.ppv, m.npv]
    return row


def format_table(rows, header=SWEEP_HEADER):
    lines = ["\t".join(header)]
    lines += ["\t".join(_cell(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def sweep_report(train_cases, val_cases, image_sizes=(16, 32, 64), n_inputs=(10, 20, 30),
                 vrs=features.VR_GRID, cfg: PipelineConfig = PipelineConfig()):
    """Train and validate every (image size, input count, VR) cell.

    ``train_cases`` and ``val_cases`` are aligned cases. Cell ``i`` (grid
    order) seeds its sampler from ``(master seed, "sweep", i)``. Returns the
    list of :class:`ExperimentResult` in grid order.
    """
    grid = [(s, n, v) for s in image_sizes for n in n_inputs for v in vrs]
    if not grid:
        raise ValueError("empty grid")
    results = []
    vec_cache = {}
    ytr = [c.label for c in train_cases]
    yva = [c.label for c in val_cases]
    for i, (size, n_in, vr) in enumerate(grid):
        if size not in vec_cache:
            vec_cache[size] = (case_vectors(train_cases, size), case_vectors(val_cases, size))
        xtr, xva = vec_cache[size]
        results.append(run_experiment(xtr, ytr, xva, yva, size, n_in, vr, cfg,
                                      derive_seed(cfg.master_seed, "sweep", i)))
    return results


def summarize(results):
    """Max/min/mean of each per-class metric across sweep cells (NaNs skipped)."""
    rows = []
    for metric in ("sensitivity", "specificity", "ppv", "npv"):
        for stat, fn in (("max", np.nanmax), ("min", np.nanmin), ("mean", np.nanmean)):
            row = [metric, stat]
            for c in CLASSES:
                vals = np.array([getattr(r.metrics[c], metric) for r in results], dtype=float)
                row.append(float(fn(vals)) if np.any(~np.isnan(vals)) else float("nan"))
            rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# registration benchmark on the Shepp-Logan head

TABLE1_TRUTH = TransformParams(0.9, 6.5, 25.0, 15.0)
TABLE1_LEVEL = 0.1


def table1_benchmark(seed=0, size=256, truth=TABLE1_TRUTH, ga: GAConfig | None = None):
    """Recover a known transform of the Shepp-Logan phantom with the GA.

    Both images are segmented (head outline at ``TABLE1_LEVEL`` of max) and
    binarised before alignment, as for lung views. Returns rows of
    ``(parameter, actual, found, relative error in percent)`` and the fitness.
    """
    ga = replace(ga or GAConfig(), seed=seed)
    ref = shepp_logan(size)
    tgt = apply_transform(ref, truth)
    ref_b = binarize(ref, segment_lung(ref, TABLE1_LEVEL))
    tgt_b = binarize(tgt, segment_lung(tgt, TABLE1_LEVEL))
    result = ga_align(ref_b, tgt_b, ga)
    rows = []
    for name, actual, found in zip(("Scale", "Rotation", "X-translation", "Y-translation"),
                                   truth.as_array(), result.params.as_array()):
        rows.append((name, float(actual), float(found), abs(found - actual) / abs(actual) * 100))
    return rows, result.fitness
