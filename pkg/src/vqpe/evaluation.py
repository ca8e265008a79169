"""Stratified splitting, one-vs-rest diagnostic metrics and ROC analysis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ConfusionCounts", "Metrics", "RocCurve", "split_dataset", "confusion",
    "metrics", "metrics_from_counts", "roc", "pairwise_auc", "per_class_accuracy",
]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class Metrics:
    sensitivity: float
    specificity: float
    ppv: float
    npv: float


def _ratio(num, den):
    return num / den if den else float("nan")


def metrics_from_counts(c: ConfusionCounts) -> Metrics:
    """Undefined ratios (zero denominator) come back as NaN."""
    return Metrics(_ratio(c.tp, c.tp + c.fn), _ratio(c.tn, c.tn + c.fp),
                   _ratio(c.tp, c.tp + c.fp), _ratio(c.tn, c.tn + c.fn))


def confusion(predictions, labels, positive_class) -> ConfusionCounts:
    pred = np.asarray(predictions, dtype=object)
    lab = np.asarray(labels, dtype=object)
    if pred.shape != lab.shape:
        raise ValueError("predictions and labels differ in length")
    if pred.size == 0:
        raise ValueError("empty input")
    pp = pred == positive_class
    lp = lab == positive_class
    return ConfusionCounts(int(np.sum(pp & lp)), int(np.sum(pp & ~lp)),
                           int(np.sum(~pp & ~lp)), int(np.sum(~pp & lp)))


def metrics(predictions, labels, positive_class) -> Metrics:
    """Sensitivity, specificity, PPV and NPV of ``positive_class`` versus the rest."""
    return metrics_from_counts(confusion(predictions, labels, positive_class))


def per_class_accuracy(predictions, labels, classes):
    """Fraction of each class's cases that were assigned to it."""
    pred = np.asarray(predictions, dtype=object)
    lab = np.asarray(labels, dtype=object)
    out = {}
    for c in classes:
        sel = lab == c
        out[c] = float(np.mean(pred[sel] == c)) if sel.any() else float("nan")
    return out


def split_dataset(items, train_fraction=0.7, seed=0, labels=None):
    """Stratified random split; returns ``(train, validation)`` item lists.

    Class labels come from ``labels`` or, when omitted, each item's ``label``.

    Each class contributes ``round(n * train_fraction)`` items to training,
    clamped so both sides keep at least one. Classes are visited in sorted
    order, each shuffled by its own stream of ``seed``.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must be in (0, 1)")
    labels = [it.label for it in items] if labels is None else list(labels)
    if len(labels) != len(items):
        raise ValueError("items and labels differ in length")
    train_idx, val_idx = [], []
    for ci, cls in enumerate(sorted(set(labels))):
        idx = [i for i, l in enumerate(labels) if l == cls]
        if len(idx) < 2:
            raise ValueError(f"class {cls!r} has fewer than 2 members")
        n_train = int(np.floor(len(idx) * train_fraction + 0.5))
        n_train = min(max(n_train, 1), len(idx) - 1)
        perm = np.random.default_rng([seed, ci]).permutation(len(idx))
        train_idx += [idx[j] for j in perm[:n_train]]
        val_idx += [idx[j] for j in perm[n_train:]]
    train_idx.sort()
    val_idx.sort()
    return [items[i] for i in train_idx], [items[i] for i in val_idx]


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray   # +inf first, then each distinct score, descending
    auc: float

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))

    def to_tsv(self):
        return "fpr\ttpr\n" + "".join(f"{f!r}\t{t!r}\n" for f, t in self.points)


def roc(scores, binary_labels) -> RocCurve:
    """ROC over every distinct score (a case is positive when score >= threshold).

    Tied scores move FPR and TPR together, so the trapezoid gives them half
    credit.
    """
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(binary_labels).astype(bool).ravel()
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative label")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[ends]
    fp = np.cumsum(~y)[ends]
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(fpr, tpr, np.r_[np.inf, s[ends]], auc)


def pairwise_auc(scores, binary_labels) -> float:
    """Mann-Whitney estimate P(pos > neg) + P(pos == neg) / 2 over all pairs."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(binary_labels).astype(bool).ravel()
    pos, neg = s[y], s[~y]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative label")
    diff = pos[:, None] - neg[None, :]
    return float(((diff > 0).sum() + 0.5 * (diff == 0).sum()) / diff.size)
