"""
A committee of networks from Hybrid Monte Carlo
===============================================

A small network (5 tanh hidden units, one logistic output) is fitted to a
toy ordinal problem. Instead of one set of weights, HMC draws a chain of
weight vectors from the posterior; the thinned samples form a committee
whose spread says how sure the model is.
"""
import numpy as np

from vqpe.bayesnet import HmcConfig, committee_predict, hmc_sample

rng = np.random.default_rng(0)
n = 60
x = rng.normal(size=(n, 2))
score = x[:, 0] + 0.5 * x[:, 1]
t = np.where(score < -0.5, 0.0, np.where(score < 0.5, 0.5, 1.0))

cfg = HmcConfig(n_burnin=200, n_committee=100, seed=1)
committee = hmc_sample(x, t, cfg)
print(f"{len(committee)} networks, acceptance rate {committee.acceptance_rate:.2f}")

###############################################################################
# Points near the data agree; a point far outside it does not.

for point in ([-2.0, 0.0], [0.0, 0.0], [2.0, 0.5], [8.0, -12.0]):
    out = committee_predict(committee, point)
    lo, hi = out.ci95
    print(f"x={point!s:<14} mean {out.mean:.3f}  std {out.std:.3f}  "
          f"95% [{lo:.3f}, {hi:.3f}]  -> {out.predicted_class}")
