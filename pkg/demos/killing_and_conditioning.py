"""
Killing at an exponential time and conditioning on the last position
====================================================================

Kill X_t = W_t - 0.5 t at an independent time zeta ~ Exp(lam) and keep only
paths with X(zeta-) > a. As a -> inf and lam -> 0 the kept paths follow the
conditioned process, which here is W_t + 0.5 t. For large a the law of the
kept X_1 is N(sqrt(mu^2 + 2 lam), 1), so small lam matters as much as large a.
"""

import math

import numpy as np

from doobcond import KillCondSetup, SimConfig, bm_drift, exact_sampler, ks_statistic, simulate_killed_conditioned

mu = 0.5
spec = bm_drift(mu)
exact = exact_sampler(spec, 0.0, 1.0, 20000, seed=100, conditioned=True)
cfg = SimConfig(0.0, 1.0, 0.05, 40000, seed=5)

print("   a    lam   accepted   mean X_1   KS vs N(0.5, 1)   large-a mean")
for a in (-1.0, 0.0, 1.0):
    for lam in (0.4, 0.1, 0.05):
        res = simulate_killed_conditioned(spec, KillCondSetup(lam, a, 1.0), cfg)
        ks = ks_statistic(res.samples, exact)
        limit = math.sqrt(mu * mu + 2 * lam)
        print(f"{a:4.0f}  {lam:5.2f}  {res.accepted:8d}   {res.samples.mean():8.4f}   {ks:14.4f}   {limit:10.4f}")

# at the grid of the larger thresholds almost nothing is accepted
r = math.sqrt(mu * mu + 2 * 0.05)
p = (r - mu) / (2 * r) * np.exp(-(r + mu) * 8.0)
print(f"P(X(zeta) > 8) at lam = 0.05: {p:.3g}; paths needed for 20000 acceptances: {2e4 / p:.3g}")
