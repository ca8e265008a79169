"""
From subtraction images to classifier inputs
============================================

Perfusion minus ventilation is negative where a defect blocks blood flow.
The six views of a case are resized and stacked into one long vector; PCA
shortens it, and the statistical overlay function keeps the coefficients
that best separate the classes.

This demo skips alignment (the phantoms here have no misalignment) so it
runs in a few seconds.
"""
from dataclasses import replace

import numpy as np

from vqpe.features import (VR_GRID, case_vector, defect_magnitude, pca_fit, pca_project,
                           sof_select, subtract)
from vqpe.phantom import CLASSES, default_class_specs, generate_dataset

specs = {c: replace(s, misalignment_jitter=None)
         for c, s in default_class_specs(artifacts=False).items()}
cases = generate_dataset(specs, (20, 20, 10), seed=7)
labels = np.array([c.label for c in cases])

subs = [[subtract(q, v) for v, q in zip(c.ventilation, c.perfusion)] for c in cases]
mags = np.array([sum(defect_magnitude(s) for s in ss) for ss in subs])
for cls in CLASSES:
    print(f"{cls:<13} mean defect magnitude {mags[labels == cls].mean():9.0f}")

###############################################################################
# Coarser images need fewer eigenvectors for the same retained variability.

print("\nimage size  " + "  ".join(f"vr={v:.2f}" for v in VR_GRID))
vectors = {}
for size in (16, 32, 64):
    vectors[size] = np.array([case_vector(ss, size) for ss in subs])
    model = pca_fit(vectors[size], max(VR_GRID))
    counts = [model.n_components_for(v) for v in VR_GRID]
    print(f"{size:>10}  " + "  ".join(f"{n:>7d}" for n in counts))

###############################################################################
# Rank the 64x64 PCA coefficients by class separation.

model = pca_fit(vectors[64], 0.9)
coeffs = pca_project(model, vectors[64])
sel = sof_select([coeffs[labels == c] for c in CLASSES], 5)
print(f"\n{model.n_components} components at vr=0.90; top 5 by separation:")
for i in sel.chosen:
    print(f"  component {i:>2}  delta {sel.scores[i]:.2f}")
