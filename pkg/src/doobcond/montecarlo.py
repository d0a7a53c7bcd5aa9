"""Euler-Maruyama path simulation, the kill-and-condition rejection sampler,
importance weighting by the scale function, and two-sample KS statistics.

Random numbers come from counter-based Philox streams keyed by
``(seed, tag, block)``; paths are processed in fixed blocks of ``BLOCK``
paths, so results do not depend on how many worker threads run the blocks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .errors import (
    ConfigInvalid,
    DoobCondError,
    EmptySample,
    NoAcceptedPaths,
    NonFinite,
    UnsupportedPreset,
)

__all__ = [
    "ALIVE", "KILLED", "HIT_LOWER", "EXPLODED", "NONFINITE", "FLAG_NAMES",
    "SimConfig",
    "KillCondSetup",
    "PathEnsemble",
    "EmpiricalDistribution",
    "KilledConditionedResult",
    "simulate_paths",
    "simulate_model",
    "exact_sampler",
    "simulate_killed_conditioned",
    "weighted_expectation",
    "importance_weights",
    "mean_and_se",
    "ks_statistic",
    "explosion_profile",
    "hitting_probability_mc",
]

ALIVE, KILLED, HIT_LOWER, EXPLODED, NONFINITE = 0, 1, 2, 3, 4
FLAG_NAMES = ("alive", "killed", "hit_lower_guard", "exploded", "nonfinite")

BLOCK = 4096          # paths per RNG stream
MAX_HALVINGS = 8      # guard refinement down to dt / 2**8

# stream tags keep independent uses of one seed apart
_TAG_PATHS, _TAG_EXACT = 0, 1


def _rng(seed, tag, block):
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=(tag, block))
    return np.random.Generator(np.random.Philox(ss))


def _workers(threads):
    if threads is None:
        return os.cpu_count() or 1
    if int(threads) < 1:
        raise ConfigInvalid("threads must be >= 1")
    return int(threads)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings. ``lower_guard=None`` means the default floor."""

    x0: float
    t_end: float
    dt: float
    n_paths: int
    seed: int = 0
    lower_guard: float | None = None
    explosion_cap: float = 1e6
    record: str = "marginal_only"

    def resolve(self, ell: float) -> "SimConfig":
        """Fill in defaults for the state space ``(ell, inf)`` and validate."""
        guard = self.lower_guard
        if guard is None:
            guard = ell + 1e-8 * (self.x0 - ell) if math.isfinite(ell) else -1e8
        cfg = replace(self, lower_guard=float(guard))
        cfg.validate(ell)
        return cfg

    def validate(self, ell: float = -math.inf):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ConfigInvalid(f"dt must be positive, got {self.dt!r}")
        if not (math.isfinite(self.t_end) and self.t_end >= 0):
            raise ConfigInvalid(f"t_end must be >= 0, got {self.t_end!r}")
        if self.t_end > 0 and self.dt > self.t_end:
            raise ConfigInvalid("dt must not exceed t_end")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigInvalid(f"n_paths must be a positive integer, got {self.n_paths!r}")
        if self.record not in ("marginal_only", "full_path"):
            raise ConfigInvalid(f"record must be marginal_only or full_path, got {self.record!r}")
        g = self.lower_guard
        if g is None or not (ell < g < self.x0 < self.explosion_cap):
            raise ConfigInvalid(
                f"need ell < lower_guard < x0 < explosion_cap, got "
                f"{ell!r}, {g!r}, {self.x0!r}, {self.explosion_cap!r}"
            )

    def steps(self):
        """Number of full steps and the length of a final partial step."""
        n = int(math.floor(self.t_end / self.dt + 1e-9))
        rem = self.t_end - n * self.dt
        if rem <= 1e-9 * self.dt:
            rem = 0.0
        return n, rem

    def as_dict(self):
        return {
            "x0": self.x0, "t_end": self.t_end, "dt": self.dt,
            "n_paths": self.n_paths, "seed": self.seed,
            "lower_guard": self.lower_guard, "explosion_cap": self.explosion_cap,
            "record": self.record,
        }


@dataclass(frozen=True)
class KillCondSetup:
    """Exponential killing at rate ``lam``; accept iff ``X(zeta-) > a`` and
    ``zeta > t_obs``."""

    lam: float
    a: float
    t_obs: float

    def validate(self, ell):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise ConfigInvalid("lambda must be positive")
        if not self.t_obs >= 0:
            raise ConfigInvalid("t_obs must be >= 0")
        if not (self.a > ell and math.isfinite(self.a)):
            raise ConfigInvalid(f"a must lie in ({ell!r}, inf)")


@dataclass
class EmpiricalDistribution:
    """Sorted samples with the right-continuous empirical CDF."""

    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.sort(np.asarray(self.samples, dtype=float).ravel())

    @property
    def n(self):
        return len(self.samples)

    def cdf(self, x):
        if self.n == 0:
            raise EmptySample("empty sample")
        return np.searchsorted(self.samples, x, side="right") / self.n

    def mean(self):
        return float(np.mean(self.samples))

    def var(self):
        return float(np.var(self.samples, ddof=1))

    def to_csv(self):
        return "value\n" + "".join(f"{v:.17g}\n" for v in self.samples)


@dataclass
class PathEnsemble:
    """Per-path results in path-index order.

    ``values`` holds terminal values, or full trajectories of shape
    ``(n_paths, len(times))`` when recorded. Frozen paths keep their frozen
    value (the guard, the cap, or the last finite value). ``flag_time`` is
    when the terminal flag was set (nan for paths still alive). ``zeta`` is
    the killing time (nan without killing). ``stream`` is the path index;
    its random numbers come from block ``stream // BLOCK`` of the seed.
    """

    times: np.ndarray
    values: np.ndarray
    flags: np.ndarray
    flag_time: np.ndarray
    zeta: np.ndarray
    observed: np.ndarray | None = None
    stream: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.stream is None:
            self.stream = np.arange(len(self.flags))

    @property
    def n_paths(self):
        return len(self.flags)

    @property
    def terminal(self):
        return self.values if self.values.ndim == 1 else self.values[:, -1]

    def marginal(self):
        """Terminal values of every path whose coefficients stayed finite."""
        return EmpiricalDistribution(self.terminal[self.flags != NONFINITE])

    def counts(self):
        return {name: int(np.sum(self.flags == i)) for i, name in enumerate(FLAG_NAMES)}

    def to_csv(self):
        lines = ["path_id,flag,t,value"]
        if self.values.ndim == 1:
            t_end = self.times[-1]
            for i, (f, v) in enumerate(zip(self.flags, self.values)):
                lines.append(f"{i},{FLAG_NAMES[f]},{t_end:.17g},{v:.17g}")
        else:
            for i in range(self.n_paths):
                name = FLAG_NAMES[self.flags[i]]
                lines += [f"{i},{name},{t:.17g},{v:.17g}" for t, v in zip(self.times, self.values[i])]
        return "\n".join(lines) + "\n"


def _safe(fn, x):
    """Evaluate a coefficient; entries that fail come back as nan."""
    try:
        with np.errstate(all="ignore"):
            out = np.asarray(fn(x), dtype=float)
        return np.broadcast_to(out, x.shape).astype(float, copy=False)
    except (ArithmeticError, ValueError, OverflowError, DoobCondError):
        out = np.empty_like(x)
        for i, v in enumerate(x):
            try:
                out[i] = float(fn(v))
            except (ArithmeticError, ValueError, OverflowError, DoobCondError):
                out[i] = np.nan
        return out


class _Block:
    """One block of paths sharing a single RNG stream."""

    def __init__(self, drift, vol, cfg, rng, n, bridge_cap=False):
        self.drift = drift
        self.vol = vol
        self.guard = cfg.lower_guard
        self.cap = cfg.explosion_cap
        self.rng = rng
        self.bridge_cap = bridge_cap
        self.x = np.full(n, float(cfg.x0))
        self.flags = np.zeros(n, dtype=np.int8)
        self.ftime = np.full(n, np.nan)

    def _refine(self, x, h, dW, depth):
        """Re-walk a step that landed on the guard with Brownian-bridge halving.

        Returns (value, hit, elapsed)."""
        b = float(_safe(self.drift, np.array([x]))[0])
        s = float(_safe(self.vol, np.array([x]))[0])
        y = x + b * h + s * dW
        if not math.isfinite(y):
            return y, False, h
        if y > self.guard:
            return y, False, h
        if depth == MAX_HALVINGS:
            return y, True, h
        dW1 = 0.5 * dW + math.sqrt(0.25 * h) * self.rng.standard_normal()
        y1, hit, e1 = self._refine(x, 0.5 * h, dW1, depth + 1)
        if hit or not math.isfinite(y1):
            return y1, hit, e1
        y2, hit, e2 = self._refine(y1, 0.5 * h, dW - dW1, depth + 1)
        return y2, hit, 0.5 * h + e2

    def step(self, idx, h, t0):
        """Advance paths ``idx`` by ``h`` (scalar or per-path array)."""
        if not len(idx):
            return
        x = self.x[idx]
        z = self.rng.standard_normal(len(idx))
        h = np.broadcast_to(np.asarray(h, dtype=float), x.shape)
        dW = np.sqrt(h) * z
        b = _safe(self.drift, x)
        s = _safe(self.vol, x)
        with np.errstate(all="ignore"):
            y = x + b * h + s * dW
        u = self.rng.random(len(idx)) if self.bridge_cap else None
        t1 = t0 + h

        bad = ~np.isfinite(y)
        low = ~bad & (y <= self.guard)
        for j in np.flatnonzero(low):
            val, hit, elapsed = self._refine(float(x[j]), float(h[j]), float(dW[j]), 1)
            if not math.isfinite(val):
                bad[j] = True
            elif hit:
                self.flags[idx[j]] = HIT_LOWER
                self.ftime[idx[j]] = t0 + elapsed if np.ndim(t0) == 0 else t0[j] + elapsed
                y[j] = self.guard
            else:
                low[j] = False
                y[j] = val
        if bad.any():
            self.flags[idx[bad]] = NONFINITE
            self.ftime[idx[bad]] = t1[bad]
            y[bad] = x[bad]
        high = ~bad & (y >= self.cap)
        if self.bridge_cap:
            # continuous-path crossing of the cap between grid points
            with np.errstate(all="ignore"):
                p = np.exp(-2.0 * (self.cap - x) * (self.cap - y) / (s * s * h))
            high |= ~bad & ~low & (y < self.cap) & (u < p)
        if high.any():
            self.flags[idx[high]] = EXPLODED
            self.ftime[idx[high]] = t1[high]
            y[high] = self.cap
        self.x[idx] = y


def _run_block(model, cfg, seed, block, n, *, killing=None, t_obs=None, bridge_cap=False):
    rng = _rng(seed, _TAG_PATHS, block)
    blk = _Block(model[0], model[1], cfg, rng, n, bridge_cap)
    full = cfg.record == "full_path" and killing is None
    n_full, rem = cfg.steps()
    if killing is not None:
        zeta = rng.exponential(1.0 / killing, size=n)
        nfull = np.floor(zeta / cfg.dt).astype(np.int64)
        rems = zeta - nfull * cfg.dt
        nfull = np.where(rems < 0, nfull - 1, nfull)
        rems = zeta - nfull * cfg.dt
    else:
        zeta = np.full(n, np.nan)
        nfull = np.full(n, n_full, dtype=np.int64)
        rems = np.full(n, rem)
    k_obs = None
    if t_obs is not None:
        k_obs = int(round(t_obs / cfg.dt))
    observed = blk.x.copy() if k_obs == 0 else None
    traj = None
    if full:
        traj = np.empty((n, n_full + 1 + (rem > 0)))
        traj[:, 0] = blk.x
    kmax = int(nfull.max()) if n else 0
    for k in range(kmax):
        idx = np.flatnonzero((blk.flags == ALIVE) & (nfull > k))
        if not len(idx):
            if observed is None and k_obs is not None:
                observed = blk.x.copy()
            if full:
                traj[:, k + 1:] = blk.x[:, None]
            break
        blk.step(idx, cfg.dt, k * cfg.dt)
        if full:
            traj[:, k + 1] = blk.x
        if k_obs is not None and k + 1 == k_obs:
            observed = blk.x.copy()
    idx = np.flatnonzero((blk.flags == ALIVE) & (rems > 0))
    blk.step(idx, rems[idx], nfull[idx] * cfg.dt)
    if full and rem > 0:
        traj[:, -1] = blk.x
    if observed is None and k_obs is not None:
        observed = blk.x.copy()
    if killing is not None:
        alive = blk.flags == ALIVE
        blk.flags[alive] = KILLED
        blk.ftime[alive] = zeta[alive]
    values = traj if full else blk.x
    return values, blk.flags, blk.ftime, zeta, observed


def _blocks(n_paths):
    return [(b, min(BLOCK, n_paths - b * BLOCK)) for b in range((n_paths + BLOCK - 1) // BLOCK)]


def _simulate(drift, vol, cfg, threads, **kw):
    blocks = _blocks(cfg.n_paths)
    with ThreadPoolExecutor(max_workers=_workers(threads)) as pool:
        parts = list(pool.map(lambda bn: _run_block((drift, vol), cfg, cfg.seed, bn[0], bn[1], **kw), blocks))
    values = np.concatenate([p[0] for p in parts])
    flags = np.concatenate([p[1] for p in parts])
    ftime = np.concatenate([p[2] for p in parts])
    zeta = np.concatenate([p[3] for p in parts])
    observed = None if parts[0][4] is None else np.concatenate([p[4] for p in parts])
    n_full, rem = cfg.steps()
    times = np.arange(n_full + 1) * cfg.dt
    if rem > 0:
        times = np.append(times, cfg.t_end)
    return PathEnsemble(times, values, flags, ftime, zeta, observed)


def simulate_paths(drift: Callable, sigma: Callable, cfg: SimConfig, *, ell: float = -math.inf,
                   threads: int | None = None, bridge_cap: bool = False) -> PathEnsemble:
    """Euler-Maruyama paths of ``dX = drift(X) dt + sigma(X) dW``.

    A step landing at or below ``lower_guard`` is re-walked with Brownian
    bridge halving down to ``dt/2**8``; if it still lands there the path is
    flagged ``hit_lower_guard`` and frozen at the guard. Reaching
    ``explosion_cap`` flags ``exploded`` and freezes the path at the cap.
    With ``bridge_cap`` a crossing of the cap between grid points is also
    detected, using the Brownian-bridge crossing probability.
    A non-finite coefficient freezes only the affected path.
    """
    cfg = cfg.resolve(ell) if cfg.lower_guard is None else cfg
    cfg.validate(ell)
    return _simulate(drift, sigma, cfg, threads, bridge_cap=bridge_cap)


def simulate_model(model, cfg: SimConfig, *, threads: int | None = None, bridge_cap: bool = False) -> PathEnsemble:
    """Simulate a DiffusionSpec or ConditionedDiffusion (anything with
    ``drift``, ``vol`` and ``ell``)."""
    return simulate_paths(model.drift, model.vol, cfg.resolve(model.ell), ell=model.ell,
                          threads=threads, bridge_cap=bridge_cap)


def _preset_params(preset, mu, sigma):
    if not isinstance(preset, str):
        params = preset.param_dict
        name = preset.preset
        mu = params.get("mu", mu) if mu is None else mu
        sigma = params.get("sigma0", sigma) if sigma is None else sigma
        preset = name
    if preset not in ("bm_drift", "gbm"):
        raise UnsupportedPreset(f"no exact sampler for {preset!r}")
    mu = 0.5 if mu is None else float(mu)
    sigma = 1.0 if sigma is None else float(sigma)
    return preset, mu, sigma


def exact_sampler(preset, x0: float, t: float, n: int, seed: int = 0, *,
                  mu: float | None = None, sigma: float | None = None,
                  conditioned: bool = False) -> EmpiricalDistribution:
    """Exact marginal samples at time ``t``.

    ``preset`` is ``"bm_drift"``/``"gbm"`` or a DiffusionSpec built from one
    of them. Brownian motion with drift ``-mu`` (or ``+mu`` when
    conditioned); geometric Brownian motion with rate ``mu`` (the
    conditioned process is GBM with rate ``sigma^2 - mu``).
    """
    preset, mu, sigma = _preset_params(preset, mu, sigma)
    if n < 1:
        raise ConfigInvalid("n must be >= 1")
    if t < 0:
        raise ConfigInvalid("t must be >= 0")
    z = np.concatenate([
        _rng(seed, _TAG_EXACT, b).standard_normal(m) for b, m in _blocks(int(n))
    ])
    if preset == "bm_drift":
        drift = mu if conditioned else -mu
        return EmpiricalDistribution(x0 + drift * t + math.sqrt(t) * z)
    if x0 <= 0:
        raise ConfigInvalid("gbm needs x0 > 0")
    rate = sigma * sigma - mu if conditioned else mu
    return EmpiricalDistribution(x0 * np.exp(sigma * math.sqrt(t) * z + (rate - 0.5 * sigma * sigma) * t))


@dataclass(frozen=True)
class KilledConditionedResult:
    samples: EmpiricalDistribution
    accepted: int
    total: int

    @property
    def acc_prob(self):
        return self.accepted / self.total

    @property
    def summary_line(self):
        return f"accepted={self.accepted} total={self.total} acc_prob={self.acc_prob:.17g}"


def simulate_killed_conditioned(spec, setup: KillCondSetup, cfg: SimConfig, *,
                                threads: int | None = None) -> KilledConditionedResult:
    """Rejection sampler for the killed-and-conditioned law at ``t_obs``.

    Each path gets an independent ``zeta ~ Exp(lam)`` and the base process
    is simulated up to exactly ``zeta`` (the last step is shortened to end
    there). A path is accepted iff ``zeta > t_obs`` and ``X(zeta) > a``; the
    accepted values at ``t_obs`` are returned. ``t_obs`` must be a multiple
    of ``dt``; ``cfg.t_end`` only has to cover ``t_obs``.
    """
    cfg = cfg.resolve(spec.ell)
    setup.validate(spec.ell)
    if setup.t_obs > cfg.t_end:
        raise ConfigInvalid("t_obs must not exceed t_end")
    k = setup.t_obs / cfg.dt
    if abs(k - round(k)) > 1e-9 * max(1.0, k):
        raise ConfigInvalid("t_obs must be a multiple of dt")
    ens = _simulate(spec.drift, spec.vol, cfg, threads, killing=setup.lam, t_obs=setup.t_obs)
    ok = (ens.zeta > setup.t_obs) & (ens.values > setup.a) & (ens.flags != NONFINITE)
    accepted = int(ok.sum())
    if accepted == 0:
        raise NoAcceptedPaths(
            f"0 of {cfg.n_paths} paths accepted (lambda={setup.lam}, a={setup.a}, t_obs={setup.t_obs})"
        )
    return KilledConditionedResult(EmpiricalDistribution(ens.observed[ok]), accepted, cfg.n_paths)


def importance_weights(spec, ss, cfg: SimConfig, *, threads: int | None = None):
    """Base-process terminal values ``X_t`` and weights ``s(X_t)/s(x0)``.

    Paths frozen at the guard carry weight ``s(guard)/s(x0)``. Raises
    NonFinite if a coefficient or a weight is not finite.
    """
    ens = simulate_model(spec, cfg, threads=threads)
    cfg = cfg.resolve(spec.ell)
    xt = ens.terminal
    if np.any(ens.flags == NONFINITE):
        raise NonFinite(f"{np.mean(ens.flags == NONFINITE):.3g} of paths have non-finite coefficients")
    with np.errstate(over="ignore"):
        w = np.exp(ss.log_s(xt) - ss.log_s(cfg.x0))
    if not np.all(np.isfinite(w)):
        frac = float(np.mean(~np.isfinite(w)))
        raise NonFinite(f"importance weights overflow for a fraction {frac:.3g} of paths "
                        f"({int(np.sum(ens.flags == EXPLODED))} exploded)")
    return xt, w


def mean_and_se(values):
    values = np.asarray(values, dtype=float)
    n = len(values)
    se = float(np.std(values, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(values)), se


def weighted_expectation(spec, ss, g: Callable, cfg: SimConfig, *, threads: int | None = None):
    """Estimate ``E[g(X_t) s(X_t)] / s(x0)`` from base-process paths.

    Returns ``(estimate, std_error)``.
    """
    xt, w = importance_weights(spec, ss, cfg, threads=threads)
    gv = np.asarray(g(xt), dtype=float) * np.ones_like(xt)
    return mean_and_se(gv * w)


def ks_statistic(e1: EmpiricalDistribution, e2: EmpiricalDistribution) -> float:
    """Two-sample Kolmogorov-Smirnov distance by a single merge scan."""
    a = e1.samples
    b = e2.samples
    n1, n2 = len(a), len(b)
    if n1 == 0 or n2 == 0:
        raise EmptySample("KS statistic needs two nonempty samples")
    i = j = 0
    d = 0.0
    while i < n1 and j < n2:
        v = a[i] if a[i] <= b[j] else b[j]
        while i < n1 and a[i] == v:
            i += 1
        while j < n2 and b[j] == v:
            j += 1
        gap = abs(i / n1 - j / n2)
        if gap > d:
            d = gap
    # once one sample is exhausted the other CDF only rises toward 1
    return max(d, abs(i / n1 - j / n2))


def explosion_profile(cd, cfg: SimConfig, t_grid, *, threads: int | None = None) -> np.ndarray:
    """Fraction of paths that reached ``explosion_cap`` by each time in
    ``t_grid``. The simulation runs to ``max(t_grid)``."""
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.size == 0 or np.any(t_grid < 0):
        raise ConfigInvalid("t_grid must be nonempty and nonnegative")
    cfg = replace(cfg, t_end=float(t_grid.max()))
    ens = simulate_model(cd, cfg, threads=threads)
    exploded = np.where(ens.flags == EXPLODED, ens.flag_time, np.inf)
    return np.array([np.mean(exploded <= t) for t in t_grid])


def hitting_probability_mc(spec, y: float, z: float, cfg: SimConfig, *,
                           threads: int | None = None):
    """Monte Carlo ``P^y{T_z < inf}`` over the horizon ``cfg.t_end``.

    ``z`` acts as an absorbing upper level with Brownian-bridge crossing
    detection between grid points; ``cfg.lower_guard`` is the lower cutoff.
    Returns ``(estimate, binomial_std_error)``.
    """
    if not z > y:
        return 1.0, 0.0
    cfg = replace(cfg, x0=float(y), explosion_cap=float(z))
    ens = simulate_model(spec, cfg, threads=threads, bridge_cap=True)
    p = float(np.mean(ens.flags == EXPLODED))
    return p, math.sqrt(max(p * (1 - p), 1e-300) / ens.n_paths)
