"""Deterministic numerical kernels: adaptive quadrature, improper integrals
and central finite differences.

Every rule here uses interior nodes only, so integrands may be singular at
the end points of the integration range.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import Divergent, NonConvergence, NonFinite

__all__ = [
    "QuadResult",
    "DoublingSeries",
    "adaptive_quadrature",
    "improper_lower_integral",
    "finite_difference_derivs",
    "gauss_legendre",
    "MAX_EVALS",
]

MAX_EVALS = 1_000_000

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

# full 15-point node set on [-1, 1] and matching weight vectors
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
_GW[1:7:2] = _WG[:3]
_GW[7] = _WG[3]
_GW[8:15] = _GW[6::-1]


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    subdivisions: int
    evaluations: int = 0

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise ValueError("error_estimate must be non-negative")
        if self.subdivisions < 1:
            raise ValueError("subdivisions must be >= 1")


def gauss_legendre(n):
    """Cached Gauss-Legendre nodes and weights on [-1, 1]."""
    rule = _GL_CACHE.get(n)
    if rule is None:
        rule = np.polynomial.legendre.leggauss(n)
        _GL_CACHE[n] = rule
    return rule


_GL_CACHE: dict = {}


def _evaluate(f, xs):
    """Evaluate ``f`` on an array of nodes, vectorized when ``f`` allows it."""
    try:
        with np.errstate(all="ignore"):
            ys = np.asarray(f(xs), dtype=float)
        if ys.shape != xs.shape:
            ys = np.broadcast_to(ys, xs.shape).astype(float)
    except (TypeError, ValueError):
        ys = np.array([float(f(float(x))) for x in xs])
    if not np.all(np.isfinite(ys)):
        bad = xs[~np.isfinite(ys)][0]
        raise NonFinite(f"integrand is not finite at x={bad!r}")
    return ys


def _gk15(f, a, b):
    half = 0.5 * (b - a)
    xs = 0.5 * (a + b) + half * _NODES
    ys = _evaluate(f, xs)
    k = half * float(np.dot(_KW, ys))
    g = half * float(np.dot(_GW, ys))
    return k, abs(k - g)


def adaptive_quadrature(
    f: Callable,
    a: float,
    b: float,
    tol: float,
    *,
    rtol: float = 0.0,
    max_evals: int = MAX_EVALS,
) -> QuadResult:
    """Globally adaptive Gauss-Kronrod (7/15) quadrature of ``f`` over (a, b).

    The interval with the largest error estimate is bisected until the summed
    estimate drops below ``max(tol, rtol*|value|)``. ``f`` is never evaluated
    at ``a`` or ``b``.

    Raises NonConvergence when the evaluation budget runs out (or no interval
    can be split further) and NonFinite when ``f`` returns inf/nan.
    """
    a = float(a)
    b = float(b)
    if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
        raise ValueError(f"need finite a < b, got a={a!r}, b={b!r}")
    if not tol > 0:
        raise ValueError("tol must be positive")

    value, err = _gk15(f, a, b)
    evals = 15
    # bisecting below this width only chases a non-integrable singularity
    min_width = 1e-30 * (b - a)
    heap = [(-err, a, b, value, err)]
    total_val = value
    total_err = err
    frozen_err = 0.0
    frozen_val = 0.0
    n_frozen = 0

    while total_err > max(tol, rtol * abs(total_val)):
        if not heap:
            raise NonConvergence(
                f"intervals cannot be split further; error estimate {total_err:.3g} > tol"
            )
        if evals + 30 > max_evals:
            raise NonConvergence(
                f"evaluation budget {max_evals} exhausted; error estimate {total_err:.3g}"
            )
        _, lo, hi, v, e = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi or hi - lo < min_width:
            # interval exhausted: keep it but stop refining
            frozen_err += e
            frozen_val += v
            n_frozen += 1
            if frozen_err > max(tol, rtol * abs(total_val)):
                raise NonConvergence(
                    f"error estimate {total_err:.3g} stuck above tolerance near x={lo!r}"
                )
            continue
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        evals += 30
        heapq.heappush(heap, (-e1, lo, mid, v1, e1))
        heapq.heappush(heap, (-e2, mid, hi, v2, e2))
        total_val += (v1 + v2) - v
        total_err += (e1 + e2) - e
        if evals % 3000 < 30 or total_err <= max(tol, rtol * abs(total_val)):
            # periodic re-summation removes add/subtract drift
            total_val = frozen_val + math.fsum(item[3] for item in heap)
            total_err = frozen_err + math.fsum(item[4] for item in heap)

    return QuadResult(
        value=total_val,
        error_estimate=total_err,
        subdivisions=len(heap) + n_frozen,
        evaluations=evals,
    )


class DoublingSeries:
    """Accumulates an improper integral piece by piece, each piece covering a
    range twice as large (in distance to the singular end) as the last.

    Classification rules:

    * divergent when, for 8 consecutive pieces, the partial sum grows by a
      factor larger than ``1 + 10*tol`` *and* the pieces stop shrinking;
    * convergent once the geometric tail ``p*r/(1-r)`` extrapolated from the
      last piece ratio ``r`` is stable to within ``tol`` (relative to the
      partial sum) between successive pieces.
    """

    STREAK = 8
    FLAT = 1e-9

    def __init__(self, tol):
        self.tol = tol
        self.pieces = []
        self.errors = []
        self.total = 0.0
        self.streak = 0
        self.tail = None
        self.tail_error = math.inf
        self._prev_tail = None

    def push(self, piece, error=0.0):
        """Add one piece. Returns True once the tail has converged.

        Raises Divergent when the divergence rule fires.
        """
        prev_total = self.total
        prev_piece = self.pieces[-1] if self.pieces else None
        self.pieces.append(piece)
        self.errors.append(error)
        self.total = prev_total + piece
        if not math.isfinite(self.total):
            raise Divergent("partial integrals overflowed")

        if prev_piece is None:
            return False
        if prev_piece == 0.0:
            ratio = 0.0 if piece == 0.0 else math.inf
        else:
            ratio = piece / prev_piece

        growing = prev_total != 0.0 and abs(self.total / prev_total) > 1.0 + 10.0 * self.tol
        if growing and ratio >= 1.0 - self.FLAT:
            self.streak += 1
            if self.streak >= self.STREAK:
                raise Divergent(
                    f"partial integral kept growing for {self.STREAK} doublings "
                    f"(piece ratio {ratio:.6g}); heuristic classification"
                )
        else:
            self.streak = 0

        if not 0.0 <= ratio < 1.0 - self.FLAT:
            self._prev_tail = None
            return False
        tail = piece * ratio / (1.0 - ratio)
        scale = max(abs(self.total), 1e-300)
        if self._prev_tail is None:
            self._prev_tail = tail
            if piece == 0.0:
                self.tail, self.tail_error = 0.0, 0.0
                return True
            return False
        tail_error = abs(tail - self._prev_tail)
        self._prev_tail = tail
        if tail_error <= self.tol * scale or abs(tail) <= 1e-3 * self.tol * scale:
            self.tail = tail
            self.tail_error = tail_error + 1e-3 * self.tol * scale
            return True
        return False

    def result(self, subdivisions):
        return QuadResult(
            value=self.total + (self.tail or 0.0),
            error_estimate=self.tail_error + math.fsum(self.errors),
            subdivisions=max(subdivisions, 1),
        )


def improper_lower_integral(
    f: Callable,
    lower: float,
    x: float,
    tol: float,
    *,
    max_evals: int = MAX_EVALS,
) -> QuadResult:
    """Integral of ``f`` from ``lower`` (finite and possibly singular, or
    ``-inf``) up to ``x``.

    The range is cut into pieces whose distance to ``lower`` doubles:
    ``[lower + d/2**(k+1), lower + d/2**k]`` for finite ``lower`` with
    ``d = x - lower``, and ``[x - 2**k, x - 2**(k-1)]`` for ``-inf``. Pieces are
    accumulated in a :class:`DoublingSeries`, whose extrapolated tail is folded
    into the result and its error estimate.
    """
    lower = float(lower)
    x = float(x)
    if not lower < x:
        raise ValueError("need lower < x")
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    if not tol > 0:
        raise ValueError("tol must be positive")

    series = DoublingSeries(tol)
    piece_tol = tol / 64.0
    evals = 0
    subdivisions = 0
    for lo, hi in _lower_pieces(lower, x):
        if evals > max_evals:
            break
        r = adaptive_quadrature(
            f, lo, hi, piece_tol, rtol=1e-14, max_evals=max_evals - evals
        )
        evals += r.evaluations
        subdivisions += r.subdivisions
        if series.push(r.value, r.error_estimate):
            return series.result(subdivisions)
    raise NonConvergence(
        f"improper integral did not settle (partial value {series.total:.6g})"
    )


def _lower_pieces(lower, x):
    if math.isfinite(lower):
        d = x - lower
        hi = x
        k = 1
        while True:
            lo = lower + d * 2.0**-k
            if not lower < lo < hi:
                return
            yield lo, hi
            hi = lo
            k += 1
    else:
        yield x - 1.0, x
        hi = x - 1.0
        for k in range(1, 1020):
            lo = x - 2.0**k
            yield lo, hi
            hi = lo


def finite_difference_derivs(f: Callable, x: float, h: float, increment: Callable | None = None):
    """Second-order central-difference estimates ``(f'(x), f''(x))``.

    ``increment(x, d)``, when given, must return ``f(x + d) - f(x)``; it lets
    callers that can compute the differences directly avoid the cancellation
    in subtracting nearby function values. The stencil is the same.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if increment is None:
        fm = float(f(x - h))
        f0 = float(f(x))
        fp = float(f(x + h))
        if not (math.isfinite(fm) and math.isfinite(f0) and math.isfinite(fp)):
            raise NonFinite(f"non-finite function value near x={x!r}")
        up, down = fp - f0, f0 - fm
    else:
        up = float(increment(x, h))
        down = -float(increment(x, -h))
        if not (math.isfinite(up) and math.isfinite(down)):
            raise NonFinite(f"non-finite increment near x={x!r}")
    d1 = (up + down) / (2.0 * h)
    d2 = (up - down) / (h * h)
    return d1, d2
