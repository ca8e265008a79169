"""Scale/rotation/translation alignment of image pairs with a real-coded GA."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .imaging import GrayImage, LungMask

__all__ = [
    "TransformParams", "GAConfig", "GAResult", "binarize", "apply_transform",
    "overlap_fitness", "jaccard", "ga_align", "IDENTITY",
]


def _wrap_degrees(deg):
    # map into (-180, 180]
    r = math.fmod(deg, 360.0)
    if r <= -180.0:
        r += 360.0
    elif r > 180.0:
        r -= 360.0
    return r


@dataclass(frozen=True)
class TransformParams:
    """Forward map: scale about the image centre, rotate counter-clockwise
    (as displayed, y pointing down) by ``rotation`` degrees, then shift by
    ``(tx, ty)`` pixels."""

    scale: float = 1.0
    rotation: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be > 0")
        object.__setattr__(self, "rotation", _wrap_degrees(float(self.rotation)))

    def as_array(self):
        return np.array([self.scale, self.rotation, self.tx, self.ty])

    @classmethod
    def from_array(cls, a):
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    def is_identity(self):
        return self.scale == 1.0 and self.rotation == 0.0 and self.tx == 0.0 and self.ty == 0.0


IDENTITY = TransformParams()


@dataclass(frozen=True)
class GAConfig:
    population: int = 60
    generations: int = 80
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    mutation_sigma: tuple = (0.05, 2.0, 2.0, 2.0)
    elitism: int = 2
    tournament: int = 3
    blend_alpha: float = 0.5
    # (low, high) for scale, rotation (deg), tx, ty
    bounds: tuple = ((0.5, 1.5), (-30.0, 30.0), (-50.0, 50.0), (-50.0, 50.0))
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ValueError("population must be >= 2")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        for name in ("crossover_rate", "mutation_rate"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0 <= self.elitism < self.population:
            raise ValueError("elitism must be in [0, population)")
        if self.tournament < 1:
            raise ValueError("tournament must be >= 1")
        if len(self.bounds) != 4 or len(self.mutation_sigma) != 4:
            raise ValueError("bounds and mutation_sigma need 4 entries")
        for (lo, hi), ident, name in zip(self.bounds, (1.0, 0.0, 0.0, 0.0),
                                         ("scale", "rotation", "tx", "ty")):
            if not lo < hi:
                raise ValueError(f"empty bounds for {name}")
            if not lo <= ident <= hi:
                raise ValueError(f"bounds for {name} must contain the identity value {ident}")
        if self.bounds[0][0] <= 0:
            raise ValueError("scale bounds must be positive")


def binarize(img: GrayImage, mask: LungMask) -> GrayImage:
    """``k - 1`` inside the mask, 0 outside."""
    if mask.shape != img.shape:
        raise ValueError("mask shape does not match image")
    return GrayImage(np.where(mask.bits, img.k - 1.0, 0.0), img.k)


def _inverse_matrix(t: TransformParams, shape):
    h, w = shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    th = math.radians(t.rotation)
    c, s = math.cos(th), math.sin(th)
    # forward, in (x, y) with y down: x' = s*(c*dx + s*dy) + cx + tx
    #                                 y' = s*(-s*dx + c*dy) + cy + ty
    # inverse in (row, col) order for ndimage.affine_transform
    inv = np.array([[c, s], [-s, c]]) / t.scale  # maps (dy', dx') -> (dy, dx)
    offset = np.array([cy, cx]) - inv @ np.array([cy + t.ty, cx + t.tx])
    return inv, offset


def _warp(a, t, shape):
    inv, offset = _inverse_matrix(t, shape)
    return ndimage.affine_transform(a, inv, offset=offset, order=1, mode="constant", cval=0.0)


def apply_transform(img: GrayImage, t: TransformParams) -> GrayImage:
    """Resample ``img`` under ``t`` with bilinear interpolation.

    Samples falling outside the input are 0. The identity returns ``img``.
    """
    if t.is_identity():
        return img
    out = _warp(img.pixels, t, img.shape)
    return GrayImage(np.clip(out, 0, img.k - 1), img.k)


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    union = np.count_nonzero(a | b)
    if union == 0:
        raise ValueError("both supports are empty")
    return np.count_nonzero(a & b) / union


def overlap_fitness(reference: GrayImage, target: GrayImage, t: TransformParams) -> float:
    """Jaccard overlap of the transformed reference support with the target support."""
    if reference.shape != target.shape:
        raise ValueError("reference and target must have equal dimensions")
    half = (reference.k - 1) / 2
    moved = apply_transform(reference, t).pixels > half
    return jaccard(moved, target.pixels > half)


@dataclass
class GAResult:
    params: TransformParams
    fitness: float
    history: list = field(default_factory=list)  # best-so-far fitness per generation

    def __iter__(self):
        yield self.params
        yield self.fitness


class _Objective:
    """Fitness evaluator with the target support precomputed."""

    def __init__(self, reference, target):
        if reference.shape != target.shape:
            raise ValueError("reference and target must have equal dimensions")
        half = (reference.k - 1) / 2
        self.ref = reference.pixels
        self.half = half
        self.shape = reference.shape
        self.target = target.pixels > half
        if not self.target.any() and not (self.ref > half).any():
            raise ValueError("both supports are empty")

    def __call__(self, genes):
        t = TransformParams.from_array(genes)
        moved = self.ref if t.is_identity() else _warp(self.ref, t, self.shape)
        # bilinear overshoot is impossible, so thresholding matches clip-then-threshold
        return jaccard(moved > self.half, self.target)


def ga_align(reference: GrayImage, target: GrayImage, cfg: GAConfig = GAConfig()) -> GAResult:
    """Search the transform that maps ``reference`` onto ``target``.

    Real-coded GA over (scale, rotation, tx, ty): tournament selection, blend
    crossover, Gaussian mutation and elitism. ``generations`` counts evaluated
    populations, the random initial one included. Returns the best transform
    seen and its fitness; result unpacks as ``(params, fitness)``.
    """
    rng = np.random.default_rng(cfg.seed)
    objective = _Objective(reference, target)
    lo = np.array([b[0] for b in cfg.bounds], dtype=float)
    hi = np.array([b[1] for b in cfg.bounds], dtype=float)
    sigma = np.asarray(cfg.mutation_sigma, dtype=float)
    n = cfg.population

    pop = lo + rng.random((n, 4)) * (hi - lo)
    fit = np.array([objective(g) for g in pop])
    best_i = int(np.argmax(fit))
    best, best_fit = pop[best_i].copy(), float(fit[best_i])
    history = [best_fit]

    def select():
        idx = rng.integers(0, n, size=cfg.tournament)
        return pop[idx[np.argmax(fit[idx])]]

    for _ in range(cfg.generations - 1):
        elite = np.argsort(-fit, kind="stable")[:cfg.elitism]
        children = [pop[i].copy() for i in elite]
        while len(children) < n:
            p1, p2 = select(), select()
            if rng.random() < cfg.crossover_rate:
                d = np.abs(p1 - p2)
                cmin = np.minimum(p1, p2) - cfg.blend_alpha * d
                cmax = np.maximum(p1, p2) + cfg.blend_alpha * d
                c1 = cmin + rng.random(4) * (cmax - cmin)
                c2 = cmin + rng.random(4) * (cmax - cmin)
            else:
                c1, c2 = p1.copy(), p2.copy()
            for c in (c1, c2):
                hit = rng.random(4) < cfg.mutation_rate
                c[hit] += rng.normal(0.0, sigma[hit])
                np.clip(c, lo, hi, out=c)
                if len(children) < n:
                    children.append(c)
        new = np.array(children)
        new_fit = np.empty(n)
        new_fit[:len(elite)] = fit[elite]
        for i in range(len(elite), n):
            new_fit[i] = objective(new[i])
        pop, fit = new, new_fit
        i = int(np.argmax(fit))
        if fit[i] > best_fit:
            best, best_fit = pop[i].copy(), float(fit[i])
        history.append(best_fit)

    return GAResult(TransformParams.from_array(best), best_fit, history)
