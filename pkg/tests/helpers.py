"""Shared Monte Carlo helpers for the (a, lambda) grid tests."""

import numpy as np

from doobcond.diffusion import bm_drift
from doobcond.errors import NoAcceptedPaths
from doobcond.montecarlo import KillCondSetup, SimConfig, exact_sampler, ks_statistic, simulate_killed_conditioned

MU = 0.5


def ks_grid(a_values, lam_values, n, seed, t_obs=1.0, dt=0.05, n_exact=20_000):
    exact = exact_sampler("bm_drift", 0.0, t_obs, n_exact, seed + 100, mu=MU, conditioned=True)
    ks = np.full((len(a_values), len(lam_values)), np.nan)
    acc = np.zeros_like(ks, dtype=int)
    cfg = SimConfig(0.0, t_obs, dt, n, seed=seed)
    for i, a in enumerate(a_values):
        for j, lam in enumerate(lam_values):
            try:
                res = simulate_killed_conditioned(bm_drift(MU), KillCondSetup(lam, a, t_obs), cfg)
            except NoAcceptedPaths:
                continue
            acc[i, j] = res.accepted
            ks[i, j] = ks_statistic(res.samples, exact)
    return ks, acc


def monotone_edges(ks):
    # an edge counts only when both ends have a KS value and it does not increase
    good = total = 0
    rows, cols = ks.shape
    for i in range(rows):
        for j in range(cols):
            for di, dj in ((1, 0), (0, 1)):
                if i + di < rows and j + dj < cols:
                    total += 1
                    a, b = ks[i, j], ks[i + di, j + dj]
                    good += bool(np.isfinite(a) and np.isfinite(b) and b <= a)
    return good, total
