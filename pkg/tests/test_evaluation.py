import math
from fractions import Fraction

import numpy as np
import pytest

from vqpe.evaluation import (ConfusionCounts, confusion, metrics, metrics_from_counts,
                             pairwise_auc, per_class_accuracy, roc, split_dataset)


def test_metrics_hand_example():
    m = metrics_from_counts(ConfusionCounts(tp=5, fp=3, tn=10, fn=2))
    assert m.sensitivity == pytest.approx(0.7143, abs=5e-5)
    assert m.specificity == pytest.approx(0.7692, abs=5e-5)
    assert m.ppv == pytest.approx(0.625, abs=5e-5)
    assert m.npv == pytest.approx(0.8333, abs=5e-5)


def test_metrics_from_predictions():
    labels = ["high"] * 7 + ["negative"] * 13
    preds = ["high"] * 5 + ["negative"] * 2 + ["high"] * 3 + ["negative"] * 10
    c = confusion(preds, labels, "high")
    assert (c.tp, c.fn, c.fp, c.tn) == (5, 2, 3, 10)
    assert c.total == 20
    perfect = metrics(labels, labels, "high")
    assert (perfect.sensitivity, perfect.specificity, perfect.ppv, perfect.npv) == (1, 1, 1, 1)


def test_metrics_undefined_ratios():
    m = metrics(["negative"] * 4, ["high", "high", "negative", "negative"], "high")
    assert m.sensitivity == 0
    assert math.isnan(m.ppv)
    with pytest.raises(ValueError):
        metrics([], [], "high")
    with pytest.raises(ValueError):
        metrics(["high"], ["high", "negative"], "high")


def test_sensitivity_specificity_swap():
    rng = np.random.default_rng(0)
    labels = rng.choice(["a", "b"], 40)
    preds = rng.choice(["a", "b"], 40)
    assert metrics(preds, labels, "a").sensitivity == metrics(preds, labels, "b").specificity
    assert metrics(preds, labels, "a").ppv == metrics(preds, labels, "b").npv


def test_per_class_accuracy():
    acc = per_class_accuracy(["n", "n", "i", "h"], ["n", "i", "i", "h"], ["n", "i", "h", "x"])
    assert acc["n"] == 1 and acc["i"] == 0.5 and acc["h"] == 1
    assert math.isnan(acc["x"])


# -- splitting -----------------------------------------------------------------

def test_split_counts_full_composition():
    labels = ["negative"] * 76 + ["intermediate"] * 76 + ["high"] * 27
    items = list(range(179))
    train, val = split_dataset(items, 0.7, seed=4, labels=labels)
    assert len(train) + len(val) == 179
    assert set(train) | set(val) == set(items) and not set(train) & set(val)
    for cls, n in (("negative", 76), ("intermediate", 76), ("high", 27)):
        n_train = sum(labels[i] == cls for i in train)
        assert n_train == math.floor(n * 0.7 + 0.5)
        assert abs(n_train - 0.7 * n) <= 1
    assert len(train) == 53 + 53 + 19


def test_split_small_and_deterministic():
    labels = ["a", "a", "b", "b"]
    train, val = split_dataset(list("wxyz"), 0.5, seed=1, labels=labels)
    assert len(train) == len(val) == 2
    assert sorted(labels["wxyz".index(c)] for c in train) == ["a", "b"]
    assert split_dataset(list("wxyz"), 0.5, seed=1, labels=labels) == (train, val)
    # a tiny fraction still leaves one item per side
    train, val = split_dataset(list("wxyz"), 0.01, seed=1, labels=labels)
    assert len(train) == 2


def test_split_errors():
    with pytest.raises(ValueError):
        split_dataset([1, 2, 3], 0.7, labels=["a", "a", "b"])
    with pytest.raises(ValueError):
        split_dataset([1, 2], 1.0, labels=["a", "a"])


def test_split_uses_item_labels():
    class Item:
        def __init__(self, label):
            self.label = label

    items = [Item("a") for _ in range(5)] + [Item("b") for _ in range(5)]
    train, val = split_dataset(items, 0.6, seed=2)
    assert sum(it.label == "a" for it in train) == 3


# -- ROC -----------------------------------------------------------------------

def brute_force_auc(scores, labels):
    """Exact Mann-Whitney statistic with rational arithmetic."""
    pos = [Fraction(s) for s, l in zip(scores, labels) if l]
    neg = [Fraction(s) for s, l in zip(scores, labels) if not l]
    total = Fraction(0)
    for p in pos:
        for n in neg:
            total += 1 if p > n else Fraction(1, 2) if p == n else 0
    return float(total / (len(pos) * len(neg)))


def test_roc_hand_cases():
    assert roc([0.9, 0.8, 0.1, 0.7], [1, 1, 0, 0]).auc == 1.0
    assert roc([0.8, 0.4, 0.4, 0.2], [1, 1, 0, 0]).auc == 0.875
    assert roc([0.3] * 6, [1, 0, 1, 0, 0, 1]).auc == 0.5
    assert pairwise_auc([0.8, 0.4, 0.4, 0.2], [1, 1, 0, 0]) == 0.875


def test_roc_matches_brute_force_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 200))
        scores = rng.integers(0, 12, n) / 11.0 if rng.random() < 0.5 else rng.random(n)
        labels = rng.random(n) < rng.uniform(0.2, 0.8)
        labels[0], labels[1] = True, False
        curve = roc(scores, labels)
        assert abs(curve.auc - brute_force_auc(scores, labels)) <= 1e-9
        assert abs(curve.auc - pairwise_auc(scores, labels)) <= 1e-9


def test_roc_curve_shape():
    rng = np.random.default_rng(1)
    scores, labels = rng.random(50), rng.random(50) < 0.4
    labels[:2] = [True, False]
    c = roc(scores, labels)
    assert c.points[0] == (0.0, 0.0) and c.points[-1] == (1.0, 1.0)
    assert np.all(np.diff(c.fpr) >= 0) and np.all(np.diff(c.tpr) >= 0)
    assert np.all(np.diff(c.thresholds) < 0)
    assert c.auc == pytest.approx(np.trapezoid(c.tpr, c.fpr), abs=1e-12)
    lines = c.to_tsv().splitlines()
    assert lines[0] == "fpr\ttpr" and len(lines) == len(c.fpr) + 1


def test_roc_reversed_scores():
    rng = np.random.default_rng(2)
    for _ in range(20):
        scores = rng.integers(0, 5, 30).astype(float)
        labels = rng.random(30) < 0.5
        labels[:2] = [True, False]
        assert roc(-scores, labels).auc == pytest.approx(1 - roc(scores, labels).auc, abs=1e-12)


def test_roc_errors():
    with pytest.raises(ValueError):
        roc([0.1, 0.2], [1, 1])
    with pytest.raises(ValueError):
        roc([0.1, 0.2], [1])
