"""The diffusion conditioned to drift to +inf, and general h-transform
characteristics.

Conditioning with ``h = s`` turns the drift ``b`` into::

    b_tilde(x) = b(x) + sigma(x)^2 s'(x) / s(x)

where the ratio ``s'/s`` is formed as ``exp(-B(x) - log s(x))`` so that it
stays finite even when ``s`` or ``s'`` alone would under- or overflow.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .coeffexpr import compile_expr, parse
from .diffusion import DiffusionSpec
from .errors import AssumptionViolated, NonConvergence, NonFinite, OutOfDomain
from .scale import ScaleSpeed, build_scale_speed, check_assumptions

__all__ = [
    "ConditionedDiffusion",
    "HTransformChars",
    "conditioned_drift",
    "condition_to_infinity",
    "h_transform_chars",
    "h_generator",
    "q_weight",
]

EXCESSIVE_WARNING = "h is assumed excessive; this is not verified"


def _finite_ratio(log_ratio, x):
    with np.errstate(over="ignore"):
        r = np.exp(log_ratio)
    if not np.all(np.isfinite(r)) or np.any(np.isnan(log_ratio)):
        bad = np.asarray(x)[~np.isfinite(r)] if np.ndim(x) else x
        raise NonFinite(f"s'/s is not representable at x={float(np.ravel(bad)[0])!r}")
    return r


def conditioned_drift(ss: ScaleSpeed, spec: DiffusionSpec, x):
    """``b(x) + sigma(x)^2 s'(x)/s(x)`` for scalar or array ``x``."""
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > spec.ell)) or np.any(~np.isfinite(arr)):
        raise OutOfDomain(f"x outside ({spec.ell!r}, inf)")
    ratio = _finite_ratio(ss.log_ratio(arr), arr)
    out = spec.drift(arr) + spec.variance(arr) * ratio
    return out if np.ndim(out) else float(out)


class ConditionedDiffusion:
    """``dZ = b_tilde(Z) dt + sigma(Z) dW`` on ``(ell, inf)``.

    ``b_tilde`` evaluates the drift through fresh local integration;
    ``b_tilde_fast`` uses the tabulated ``log(s'/s)`` and is what the
    simulator calls at every step. Both are reentrant.
    """

    def __init__(self, base: DiffusionSpec, ss: ScaleSpeed):
        self.base = base
        self.ss = ss
        self.ell = base.ell
        self._lock = threading.Lock()
        self._exhausted = False

    def b_tilde(self, x):
        return conditioned_drift(self.ss, self.base, x)

    def correction(self, x):
        """``sigma^2 s'/s``, the (positive) drift added by conditioning."""
        arr = np.asarray(x, dtype=float)
        out = self.base.variance(arr) * _finite_ratio(self.ss.log_ratio(arr), arr)
        return out if np.ndim(out) else float(out)

    def b_tilde_fast(self, x):
        arr = np.asarray(x, dtype=float)
        top = np.max(arr, initial=-np.inf, where=np.isfinite(arr))
        if top > self.ss.x_max and not self._exhausted:
            self._cover(top)
        with np.errstate(over="ignore"):
            r = np.exp(self.ss.log_ratio_fast(arr))
        return self.base.drift(arr) + self.base.variance(arr) * r

    def sigma(self, x):
        return self.base.vol(x)

    # uniform interface with DiffusionSpec for the simulator
    def drift(self, x):
        return self.b_tilde_fast(x)

    def vol(self, x):
        return self.base.vol(x)

    @property
    def name(self):
        return f"conditioned {self.base.name}"

    def _cover(self, x_hi):
        # Extends the drift table one doubling piece at a time. Tabulated
        # values never change, so results do not depend on which caller
        # triggers an extension first.
        with self._lock:
            while not self._exhausted and self.ss.x_max < x_hi:
                try:
                    wider = build_scale_speed(self.base, self.ss.tol, self.ss.next_boundary(self.ss.x_max))
                except (NonConvergence, NonFinite):
                    wider = self.ss
                if wider.x_max <= self.ss.x_max:
                    self._exhausted = True
                else:
                    self.ss = wider

    def __repr__(self):
        return f"ConditionedDiffusion({self.base.name!r})"


def condition_to_infinity(spec: DiffusionSpec, tol: float = 1e-10, x_max: float | None = None) -> ConditionedDiffusion:
    """Check the transience criterion and build the conditioned diffusion.

    Raises AssumptionViolated (with the report text) when the criterion
    fails. ``x_max`` extends the tabulated range used by ``b_tilde_fast``.
    """
    report = check_assumptions(spec, tol)
    if not report.passed:
        raise AssumptionViolated("; ".join(report.lines()))
    return ConditionedDiffusion(spec, build_scale_speed(spec, tol, x_max))


def _as_function(h) -> Callable:
    if callable(h):
        return h
    if isinstance(h, str):
        h = parse(h)
    if isinstance(h, (int, float)):
        c = float(h)
        return lambda x: np.full(np.shape(x), c) if np.ndim(x) else c
    return compile_expr(h)


@dataclass(frozen=True)
class HTransformChars:
    """Scale and speed densities of the h-transform at the points ``x``."""

    x: np.ndarray | float
    s_h_prime: np.ndarray | float
    m_h_prime: np.ndarray | float
    warning: str = EXCESSIVE_WARNING


def h_transform_chars(ss: ScaleSpeed, h, x) -> HTransformChars:
    """``s_h' = s'/h^2`` and ``m_h' = h^2 m'`` at ``x``.

    ``h`` is an expression (or its text), a constant, or a callable. It must
    be positive at ``x``; excessiveness is taken on trust.
    """
    hf = _as_function(h)
    arr = np.asarray(x, dtype=float)
    hv = np.asarray(hf(arr), dtype=float)
    if np.any(~(hv > 0)) or np.any(~np.isfinite(hv)):
        raise NonFinite("h must be finite and positive at every x")
    h2 = hv * hv
    sp = ss.s_prime(arr)
    mp = ss.m_prime(arr)
    if np.ndim(arr) == 0:
        return HTransformChars(float(arr), float(sp / h2), float(h2 * mp))
    return HTransformChars(arr, sp / h2, h2 * mp)


def h_generator(ss: ScaleSpeed, h, f: Callable, x: float, dx: float = 1e-4) -> float:
    """Generator of the h-transform applied to ``f`` at ``x``.

    Uses the divergence form ``(1/(h^2 m')) ((h^2/s') f')'`` with a compact
    central stencil; ``exp(B)`` enters only through differences ``B(y) - B(x)``.
    """
    hf = _as_function(h)
    spec = ss.spec
    xs = np.array([x - dx, x, x + dx])
    fv = np.array([float(f(v)) for v in xs])
    mids = np.array([x - 0.5 * dx, x + 0.5 * dx])
    B = ss.B(np.concatenate([mids, [x]]))
    hm = np.asarray(hf(mids), dtype=float)
    hx = float(hf(x))
    if not (np.all(hm > 0) and hx > 0):
        raise NonFinite("h must be positive near x")
    flux = hm**2 * np.exp(B[:2] - B[2]) * np.diff(fv) / dx
    return float(spec.variance(x) / (2.0 * hx * hx) * (flux[1] - flux[0]) / dx)


def q_weight(ss: ScaleSpeed, x0: float, xt):
    """``s(xt)/s(x0)``: the weight turning base-process samples into
    conditioned-semigroup estimates."""
    x0 = float(x0)
    if not (x0 > ss.ell and math.isfinite(x0)):
        raise OutOfDomain(f"x0={x0!r} outside ({ss.ell!r}, inf)")
    arr = np.asarray(xt, dtype=float)
    if np.any(~(arr > ss.ell)):
        raise OutOfDomain(f"xt outside ({ss.ell!r}, inf)")
    with np.errstate(over="ignore"):
        out = np.exp(ss.log_s(arr) - ss.log_s(x0))
    return out if np.ndim(out) else float(out)
