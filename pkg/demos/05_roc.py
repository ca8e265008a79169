"""
Scoring a classifier: per-class metrics and the grouped ROC
===========================================================

The committee output is a single number in (0, 1). Thresholding it at 0.25
and 0.75 gives three classes, each scored one-versus-rest. Grouping
intermediate and high together as "positive" turns the raw output into a
score for an ROC curve; its area equals the chance a random positive scores
above a random negative.
"""
import numpy as np

from vqpe.bayesnet import class_for_output
from vqpe.evaluation import metrics, pairwise_auc, per_class_accuracy, roc
from vqpe.phantom import CLASSES

rng = np.random.default_rng(4)
labels = ["negative"] * 27 + ["intermediate"] * 20 + ["high"] * 7
centre = {"negative": 0.15, "intermediate": 0.5, "high": 0.8}
scores = np.clip([rng.normal(centre[l], 0.15) for l in labels], 0.001, 0.999)
preds = [class_for_output(s) for s in scores]

print(f"{'class':<13}{'sens':>7}{'spec':>7}{'ppv':>7}{'npv':>7}{'acc':>7}")
acc = per_class_accuracy(preds, labels, CLASSES)
for c in CLASSES:
    m = metrics(preds, labels, c)
    print(f"{c:<13}{m.sensitivity:7.3f}{m.specificity:7.3f}{m.ppv:7.3f}{m.npv:7.3f}{acc[c]:7.3f}")

positive = [l != "negative" for l in labels]
curve = roc(scores, positive)
print(f"\nAUC {curve.auc:.4f} (pairwise count {pairwise_auc(scores, positive):.4f})")
print("first ROC points:", [(round(f, 3), round(t, 3)) for f, t in curve.points[:5]])
