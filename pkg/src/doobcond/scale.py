"""Scale function, speed density and hitting probabilities.

For ``dX = b dt + sigma dW`` on ``(ell, inf)`` with reference point ``w``::

    B(x)  = int_w^x 2 b / sigma^2
    s'(x) = exp(-B(x))
    s(x)  = int_ell^x s'(y) dy          (so that s(ell+) = 0)
    m'(x) = 2 exp(B(x)) / sigma(x)^2

``B`` is represented exactly enough to be treated as exact: piecewise
Chebyshev antiderivatives of ``2b/sigma^2`` on cells over which ``B`` varies by
at most ``MAX_DB``. ``log s`` is stored at cell edges and re-integrated
locally (Gauss-Legendre inside one cell) between them, so ``s`` stays strictly
increasing. Everything that can overflow is kept in log form.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import chebyshev as C

from .diffusion import DiffusionSpec
from .errors import (
    AssumptionViolated,
    Divergent,
    NonConvergence,
    NonFinite,
    OutOfDomain,
)
from .numerics import (
    DoublingSeries,
    finite_difference_derivs,
    gauss_legendre,
    improper_lower_integral,
)

__all__ = [
    "ScaleSpeed",
    "AssumptionReport",
    "build_scale_speed",
    "hitting_probability",
    "check_assumptions",
    "driftless_zero_hit_test",
    "apply_generator",
]

DEG = 24          # Chebyshev degree of 2b/sigma^2 on one cell
MAX_DB = 2.0      # max variation of B across one cell
N_GL = 20         # Gauss-Legendre nodes for in-cell integrals of s'
L_DEG = 16        # Chebyshev degree of the tabulated log(s'/s)
MAX_CELLS = 20000
MAX_CELLS_EXTENDED = 400000   # when a caller asks for a wide range explicitly
CHUNK = 4096                  # points per vectorized local integration
LEFT_MIN_DOUBLINGS = 40


def _clenshaw(coefs, t):
    """Evaluate Chebyshev series row-wise: ``coefs[..., k]`` broadcast with t."""
    b1 = np.zeros_like(t)
    b2 = np.zeros_like(t)
    for k in range(coefs.shape[-1] - 1, 0, -1):
        b1, b2 = 2.0 * t * b1 - b2 + coefs[..., k], b1
    return t * b1 - b2 + coefs[..., 0]


_CHEB_T = np.cos(np.pi * (np.arange(DEG + 1) + 0.5) / (DEG + 1))
# values at first-kind points -> Chebyshev coefficients
_CHEB_V = (2.0 / (DEG + 1)) * np.cos(np.outer(np.arange(DEG + 1), np.arccos(_CHEB_T)))
_CHEB_V[0] *= 0.5
# coefficients of g -> coefficients of its antiderivative vanishing at t = -1
_CHEB_I = np.stack([C.chebint(row, lbnd=-1) for row in np.eye(DEG + 1)], axis=1)


class _BFitter:
    """Fits piecewise Chebyshev antiderivatives of ``g = 2b/sigma^2``."""

    def __init__(self, g, max_cells=MAX_CELLS):
        self.g = g
        self.max_cells = max_cells

    def _cells(self, lo, hi):
        """Fit all cells [lo[i], hi[i]] at once."""
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        pts = mid[:, None] + half[:, None] * _CHEB_T
        try:
            gv = np.asarray(self.g(pts), dtype=float)
        except NonFinite as exc:
            raise NonFinite(f"2b/sigma^2 not finite on [{lo.min()!r}, {hi.max()!r}]: {exc}") from None
        cg = gv @ _CHEB_V.T
        cb = half[:, None] * (cg @ _CHEB_I.T)
        delta = cb @ np.ones(DEG + 2)  # value at t = 1
        # tail of the series against the rounding floor of g itself
        floor = 2e-15 + 1e-14 * half * np.max(np.abs(gv), axis=1)
        resolved = half * np.sum(np.abs(cg[:, -4:]), axis=1) <= floor
        return cb, delta, resolved

    def fit(self, a, b, anchor_value, anchor="left"):
        """Cells covering [a, b]; B takes ``anchor_value`` at the anchor end.

        Returns (edges, coefs, B_edges) with ``coefs[i]`` the absolute
        Chebyshev series of B on ``[edges[i], edges[i+1]]``.
        """
        lo = np.array([float(a)])
        hi = np.array([float(b)])
        keep_lo, keep_hi, keep_cb, keep_d = [], [], [], []
        ncells = 0
        while len(lo):
            cb, delta, resolved = self._cells(lo, hi)
            ok = resolved & (np.abs(delta) <= MAX_DB)
            keep_lo.append(lo[ok])
            keep_hi.append(hi[ok])
            keep_cb.append(cb[ok])
            keep_d.append(delta[ok])
            ncells += int(ok.sum())
            lo, hi = lo[~ok], hi[~ok]
            if not len(lo):
                break
            # resolved but too steep: split into equal pieces by |delta|
            n = np.where(resolved[~ok], np.ceil(np.abs(delta[~ok]) / (0.8 * MAX_DB)), 2)
            n = np.clip(n, 2, 4096).astype(int)
            if ncells + n.sum() > self.max_cells:
                raise NonConvergence(f"more than {self.max_cells} cells needed on [{a!r}, {b!r}]")
            width = hi - lo
            tiny = width <= 1e-13 * np.maximum(np.abs(lo), np.abs(hi))
            if tiny.any():
                raise NonConvergence(f"cannot resolve 2b/sigma^2 near x={lo[tiny][0]!r}")
            rep = np.repeat(np.arange(len(lo)), n)
            k = np.arange(len(rep)) - np.repeat(np.cumsum(n) - n, n)
            nn = n[rep]
            new_lo = lo[rep] + width[rep] * (k / nn)
            new_hi = np.where(k + 1 == nn, hi[rep], lo[rep] + width[rep] * ((k + 1) / nn))
            lo, hi = new_lo, new_hi
        lo = np.concatenate(keep_lo)
        order = np.argsort(lo, kind="stable")
        lo = lo[order]
        hi = np.concatenate(keep_hi)[order]
        cbs = np.concatenate(keep_cb)[order]
        deltas = np.concatenate(keep_d)[order]
        if anchor == "left":
            starts = anchor_value + np.concatenate([[0.0], np.cumsum(deltas)[:-1]])
        else:
            starts = anchor_value - np.cumsum(deltas[::-1])[::-1]
        coefs = cbs.copy()
        coefs[:, 0] += starts
        edges = np.concatenate([lo, hi[-1:]])
        B_edges = np.concatenate([starts, [starts[-1] + deltas[-1]]])
        if anchor == "right":
            B_edges[-1] = anchor_value
        else:
            B_edges[0] = anchor_value
        return edges, coefs, B_edges


def _cell_log_integrals(edges, coefs, B_edges):
    """log of int s' over each cell, using GL with the left-edge shift."""
    t, wts = gauss_legendre(N_GL)
    half = 0.5 * (edges[1:] - edges[:-1])
    Bn = _clenshaw(coefs[:, None, :], np.broadcast_to(t, (len(half), N_GL)))
    with np.errstate(divide="ignore"):
        return -B_edges[:-1] + np.log(half * np.sum(wts * np.exp(-(Bn - B_edges[:-1, None])), axis=1))


def _left_macro(ell, anchor, unit):
    """Doubling pieces toward ell, nearest first: yields (lo, hi, depth)."""
    if math.isfinite(ell):
        d = anchor - ell
        hi = anchor
        k = 1
        while True:
            lo = ell + d * 2.0**-k
            if not ell < lo < hi:
                return
            yield lo, hi, k
            hi = lo
            k += 1
    else:
        hi = anchor
        for k in range(1, 1020):
            lo = anchor - unit * 2.0 ** (k - 1)
            yield lo, hi, k
            hi = lo


def _right_macro(ell, w, unit):
    if math.isfinite(ell):
        d = w - ell
        for k in range(1, 1020):
            yield ell + d * 2.0**k
    else:
        for k in range(0, 1020):
            yield w + unit * 2.0**k


@dataclass
class _LeftScan:
    edges: np.ndarray
    coefs: np.ndarray
    B_edges: np.ndarray
    log_I: np.ndarray     # per-cell log integrals
    tail: float
    tail_error: float


def _scan_left(fitter, ell, anchor, B_anchor, tol, unit, min_depth=0, max_cells=MAX_CELLS):
    """Accumulate int_ell^anchor s' in doubling pieces toward ell.

    Raises Divergent when the doubling series diverges. Keeps extending
    after convergence until ``min_depth`` doublings (finite ell) or until the
    pieces are negligible (infinite ell), so that cached values close to ell
    carry no extrapolation error.
    """
    series = DoublingSeries(tol)
    parts = []
    B_hi = B_anchor
    ncells = 0
    converged = False
    # shift: pieces are accumulated as exp(log piece - shift) to stay in range
    shift = None
    for lo, hi, depth in _left_macro(ell, anchor, unit):
        edges, coefs, B_edges = fitter.fit(lo, hi, B_hi, anchor="right")
        B_hi = B_edges[0]
        log_I = _cell_log_integrals(edges, coefs, B_edges)
        with np.errstate(divide="ignore"):
            log_piece = np.logaddexp.reduce(log_I) if len(log_I) else -np.inf
        if shift is None:
            shift = log_piece if np.isfinite(log_piece) else 0.0
        parts.append((edges, coefs, B_edges, log_I))
        ncells += len(log_I)
        piece = math.exp(min(log_piece - shift, 700.0)) if np.isfinite(log_piece) else 0.0
        if series.push(piece, 0.0):
            converged = True
        if converged:
            if math.isfinite(ell):
                if depth >= min_depth:
                    break
            elif piece <= 1e-18 * series.total:
                break
        if ncells > max_cells:
            if converged:
                break
            raise NonConvergence("scale integral toward ell needs too many cells")
    else:
        if not converged:
            raise NonConvergence("scale integral toward ell did not settle")
    if not converged:
        raise NonConvergence("scale integral toward ell did not settle")
    # final tail re-estimated from the last two pieces
    p = series.pieces
    tail, tail_err = series.tail, series.tail_error
    if len(p) >= 2 and p[-2] > 0 and 0 <= p[-1] / p[-2] < 1:
        r = p[-1] / p[-2]
        tail = p[-1] * r / (1 - r)
        tail_err = min(tail_err, abs(tail))
        if len(p) >= 3 and p[-3] > 0:
            r0 = p[-2] / p[-3]
            if 0 <= r0 < 1:
                tail_err = abs(tail - p[-1] * r0 / (1 - r0))
    parts.reverse()
    edges = np.concatenate([q[0][:-1] for q in parts] + [parts[-1][0][-1:]])
    coefs = np.concatenate([q[1] for q in parts])
    B_edges = np.concatenate([q[2][:-1] for q in parts] + [parts[-1][2][-1:]])
    log_I = np.concatenate([q[3] for q in parts])
    with np.errstate(divide="ignore"):
        log_tail = math.log(tail) + shift if tail > 0 else -math.inf
        log_tail_err = math.log(tail_err) + shift if tail_err > 0 else -math.inf
    return _LeftScan(edges, coefs, B_edges, log_I, log_tail, log_tail_err)


def _cumulative_log(log_start, log_I):
    out = np.empty(len(log_I) + 1)
    out[0] = log_start
    acc = log_start
    for i, v in enumerate(log_I):
        acc = np.logaddexp(acc, v)
        out[i + 1] = acc
    return out


class ScaleSpeed:
    """Numerically constructed scale function and speed density.

    Methods accept scalars or arrays. ``x`` outside the cached range is
    handled by fresh local integration from the nearest cached edge (or,
    very close to ``ell``, by a fresh improper integral), which is slower but
    exact to the same tolerance.
    """

    def __init__(self, spec: DiffusionSpec, tol: float = 1e-10, x_max: float | None = None):
        if not tol > 0:
            raise ValueError("tol must be positive")
        self.spec = spec
        self.tol = tol
        self.ell = spec.ell
        self.w = spec.w
        self._unit = (spec.w - spec.ell) if math.isfinite(spec.ell) else 1.0
        self._fitter = _BFitter(spec.g)

        try:
            left = _scan_left(self._fitter, self.ell, self.w, 0.0, tol, self._unit,
                              min_depth=LEFT_MIN_DOUBLINGS)
        except Divergent as exc:
            raise AssumptionViolated(
                f"s(ell+) divergent: int_ell^w s' does not converge ({exc})"
            ) from None

        cell_cap = MAX_CELLS_EXTENDED
        if x_max is None:
            cell_cap = MAX_CELLS
            x_max = (self.ell + self._unit * 2.0**14) if math.isfinite(self.ell) else self.w + 128.0
        if not x_max > self.w:
            raise ValueError("x_max must exceed w")
        # whole doubling pieces only: a wider table then extends a narrower
        # one without changing any value already tabulated
        x_max = self.next_boundary(x_max, inclusive=True)
        r_edges, r_coefs, r_B = self._fit_right(x_max, cell_cap)
        r_logI = _cell_log_integrals(r_edges, r_coefs, r_B)

        self._edges = np.concatenate([left.edges, r_edges[1:]])
        self._coefs = np.concatenate([left.coefs, r_coefs])
        self._B_edges = np.concatenate([left.B_edges, r_B[1:]])
        self._w_index = len(left.edges) - 1
        self._B_edges[self._w_index] = 0.0
        log_I = np.concatenate([left.log_I, r_logI])
        self._log_s_edges = _cumulative_log(left.tail, log_I)

        # lowest edge whose value is not dominated by the extrapolated tail
        rel_tail_err = np.exp(left.tail_error - self._log_s_edges)
        ok = (rel_tail_err <= 1e-2 * tol) & np.isfinite(self._log_s_edges)
        first = int(np.argmax(ok)) if ok.any() else self._w_index
        self._lo_index = min(first, self._w_index)
        self.x_lo = float(self._edges[self._lo_index])
        self.x_max = float(self._edges[-1])
        self._build_fast_table()

    def next_boundary(self, x, inclusive=False):
        """Smallest right-hand doubling boundary above (or at) ``x``."""
        for m in _right_macro(self.ell, self.w, self._unit):
            if m > x or (inclusive and m == x):
                return m
        return math.inf

    # -- construction helpers -------------------------------------------------

    def _fit_right(self, x_max, cell_cap):
        edges_l, coefs_l, B_l = [np.array([self.w])], [], [np.array([0.0])]
        a, B_a = self.w, 0.0
        ncells = 0
        fitter = _BFitter(self.spec.g, max_cells=cell_cap)
        for m in _right_macro(self.ell, self.w, self._unit):
            hi = min(m, x_max)
            try:
                e, c, Bv = fitter.fit(a, hi, B_a, anchor="left")
            except NonConvergence:
                if ncells == 0:
                    raise
                break
            edges_l.append(e[1:])
            coefs_l.append(c)
            B_l.append(Bv[1:])
            ncells += len(c)
            a, B_a = hi, Bv[-1]
            if hi >= x_max or ncells > cell_cap:
                break
        return np.concatenate(edges_l), np.concatenate(coefs_l), np.concatenate(B_l)

    def _build_fast_table(self):
        lo, hi = self._lo_index, len(self._edges) - 1
        a = self._edges[lo:hi]
        b = self._edges[lo + 1: hi + 1]
        t = np.cos(np.pi * (np.arange(L_DEG + 1) + 0.5) / (L_DEG + 1))
        pts = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * t
        idx = np.repeat(np.arange(lo, hi), L_DEG + 1)
        flat = pts.ravel()
        vals = -self._B_in(flat, idx) - self._log_s_in(flat, idx)
        vals = vals.reshape(pts.shape)
        # Chebyshev coefficients from values at first-kind points (DCT-II)
        k = np.arange(L_DEG + 1)
        T = np.cos(np.outer(k, np.arccos(t)))
        coef = (2.0 / (L_DEG + 1)) * vals @ T.T
        coef[:, 0] *= 0.5
        self._L_coefs = np.zeros((len(self._edges) - 1, L_DEG + 1))
        self._L_coefs[lo:hi] = coef

    # -- in-range kernels -----------------------------------------------------

    def _locate(self, x):
        idx = np.searchsorted(self._edges, x, side="right") - 1
        return np.clip(idx, 0, len(self._edges) - 2)

    def _t(self, x, idx):
        a = self._edges[idx]
        b = self._edges[idx + 1]
        return (2.0 * x - (a + b)) / (b - a)

    def _B_in(self, x, idx):
        out = _clenshaw(self._coefs[idx], self._t(x, idx))
        exact = x == self._edges[idx]
        if np.any(exact):
            out = np.where(exact, self._B_edges[idx], out)
        return out

    def _log_s_in(self, x, idx):
        if len(x) > CHUNK:
            return np.concatenate([self._log_s_in(x[i:i + CHUNK], idx[i:i + CHUNK])
                                   for i in range(0, len(x), CHUNK)])
        a = self._edges[idx]
        t, wts = gauss_legendre(N_GL)
        half = 0.5 * (x - a)
        y = a[:, None] + half[:, None] * (1.0 + t)
        B_a = self._B_edges[idx]
        By = _clenshaw(self._coefs[idx][:, None, :], self._t(y, idx[:, None]))
        J = half * np.sum(wts * np.exp(-(By - B_a[:, None])), axis=1)
        with np.errstate(divide="ignore"):
            return np.logaddexp(self._log_s_edges[idx], -B_a + np.log(J))

    def _in_range(self, x):
        return (x >= self.x_lo) & (x <= self.x_max)

    def _check_domain(self, x):
        if np.any(~(x > self.ell)) or np.any(~np.isfinite(x)):
            bad = x[~((x > self.ell) & np.isfinite(x))]
            raise OutOfDomain(f"x={float(bad.ravel()[0])!r} outside ({self.ell!r}, inf)")

    def _apply(self, x, fast, slow):
        arr = np.asarray(x, dtype=float)
        flat = arr.ravel()
        self._check_domain(flat)
        out = np.empty_like(flat)
        inside = self._in_range(flat)
        if inside.any():
            xi = flat[inside]
            out[inside] = fast(xi, self._locate(xi))
        for j in np.flatnonzero(~inside):
            out[j] = slow(float(flat[j]))
        out = out.reshape(arr.shape)
        return out if arr.ndim else float(out)

    # -- slow paths (outside the cached range) -------------------------------

    def _B_slow(self, x):
        if x > self.x_max:
            _, _, Bv = self._fitter.fit(self.x_max, x, self._B_edges[-1], anchor="left")
            return float(Bv[-1])
        _, _, Bv = self._fitter.fit(x, self.x_lo, self._B_edges[self._lo_index], anchor="right")
        return float(Bv[0])

    def _log_s_slow(self, x):
        if x > self.x_max:
            e, c, Bv = self._fitter.fit(self.x_max, x, self._B_edges[-1], anchor="left")
            log_I = _cell_log_integrals(e, c, Bv)
            return float(np.logaddexp.reduce(np.concatenate([[self._log_s_edges[-1]], log_I])))
        B_x = self._B_slow(x)
        scan = _scan_left(self._fitter, self.ell, x, B_x, self.tol,
                          (x - self.ell) if math.isfinite(self.ell) else 1.0,
                          min_depth=0)
        return float(np.logaddexp.reduce(np.concatenate([[scan.tail], scan.log_I])))

    # -- public API -----------------------------------------------------------

    def B(self, x):
        """``int_w^x 2b/sigma^2`` (dimensionless)."""
        return self._apply(x, self._B_in, self._B_slow)

    def log_s(self, x):
        return self._apply(x, self._log_s_in, self._log_s_slow)

    def s(self, x):
        """Scale function normalized so that ``s(ell+) = 0``."""
        return np.exp(self.log_s(x))

    def s_prime(self, x):
        return np.exp(-self.B(x))

    def m_prime(self, x):
        """Speed density ``2 exp(B) / sigma^2``."""
        return 2.0 * np.exp(self.B(x)) / self.spec.variance(x)

    def log_ratio(self, x):
        """``log(s'(x)/s(x))``, computed without forming s' or s."""
        arr = np.asarray(x, dtype=float)
        self._check_domain(arr.ravel())
        return -self.B(arr) - self.log_s(arr)

    def log_ratio_fast(self, x):
        """Tabulated ``log(s'/s)`` (piecewise Chebyshev, for simulation).

        Agrees with :meth:`log_ratio` to about 1e-10 relative inside the
        cached range and falls back to it outside.
        """
        def fast(xi, idx):
            return _clenshaw(self._L_coefs[idx], self._t(xi, idx))

        def slow(xi):
            return -self._B_slow(xi) - self._log_s_slow(xi)

        return self._apply(x, fast, slow)

    def increment(self, x, d):
        """``s(x + d) - s(x)`` integrated directly from ``s'``.

        For short steps this avoids the cancellation of subtracting two
        nearby values of ``s``; long steps fall back to the subtraction.
        """
        x = float(x)
        y = x + float(d)
        lo, hi = min(x, y), max(x, y)
        if lo <= self.ell:
            raise OutOfDomain(f"{lo!r} outside ({self.ell!r}, inf)")
        if d == 0:
            return 0.0
        if self._in_range(lo) and self._in_range(hi) and self._locate(hi) - self._locate(lo) <= 1:
            t, wts = gauss_legendre(N_GL)
            nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
            B = self._B_in(nodes, self._locate(nodes))
            B0 = B.min()
            val = 0.5 * (hi - lo) * math.exp(-B0) * float(np.sum(wts * np.exp(-(B - B0))))
        else:
            val = float(self.s(hi) - self.s(lo))
        return val if y > x else -val

    @property
    def cache_grid(self):
        """Cached ``(x, B, s)`` triples as three arrays."""
        with np.errstate(over="ignore"):
            s = np.exp(self._log_s_edges)
        return self._edges.copy(), self._B_edges.copy(), s

    @property
    def cache_log_s(self):
        return self._log_s_edges.copy()

    def __repr__(self):
        return (f"ScaleSpeed({self.spec.name!r}, tol={self.tol:g}, "
                f"cells={len(self._edges) - 1}, range=[{self.x_lo:.3g}, {self.x_max:.3g}])")


@functools.lru_cache(maxsize=32)
def build_scale_speed(spec: DiffusionSpec, tol: float = 1e-10, x_max: float | None = None) -> ScaleSpeed:
    """Construct the scale/speed objects of ``spec``.

    Results are memoized per ``(spec, tol, x_max)``; ScaleSpeed is read-only.
    Raises AssumptionViolated when ``int_ell s'`` diverges.
    """
    return ScaleSpeed(spec, tol=tol, x_max=x_max)


def hitting_probability(ss: ScaleSpeed, y, z) -> float:
    """``P^y{T_z < inf}`` for a diffusion converging to ell."""
    y = float(y)
    z = float(z)
    for v in (y, z):
        if not (v > ss.ell and math.isfinite(v)):
            raise OutOfDomain(f"{v!r} outside ({ss.ell!r}, inf)")
    if y >= z:
        return 1.0
    return float(math.exp(ss.log_s(y) - ss.log_s(z)))


@dataclass(frozen=True)
class AssumptionReport:
    s_ell_finite: bool
    s_infinity_infinite: bool
    boundary_verdicts: dict
    overall: str

    @property
    def passed(self):
        return self.overall == "pass"

    def lines(self):
        out = [
            f"s_ell_finite={str(self.s_ell_finite).lower()}",
            f"s_infinity_infinite={str(self.s_infinity_infinite).lower()}",
        ]
        out += [f"{k}: {v}" for k, v in self.boundary_verdicts.items()]
        out.append(f"overall={self.overall}")
        return out


def _right_divergent(spec, tol):
    """Classify int_w^inf s' by doubling pieces (log domain)."""
    fitter = _BFitter(spec.g, max_cells=200_000)
    unit = (spec.w - spec.ell) if math.isfinite(spec.ell) else 1.0
    series = DoublingSeries(tol)
    a, B_a = spec.w, 0.0
    shift = None
    for m in _right_macro(spec.ell, spec.w, unit):
        e, c, Bv = fitter.fit(a, m, B_a, anchor="left")
        log_piece = float(np.logaddexp.reduce(_cell_log_integrals(e, c, Bv)))
        if shift is None:
            shift = log_piece
        a, B_a = m, Bv[-1]
        if log_piece - shift > 700:
            return True, "int_w^inf s' overflowed: divergent"
        piece = math.exp(log_piece - shift) if np.isfinite(log_piece) else 0.0
        try:
            if series.push(piece):
                return False, f"int_w^inf s' converges (~{series.total * math.exp(shift):.6g})"
        except Divergent as exc:
            return True, f"int_w^inf s' divergent ({exc})"
    return False, "inconclusive: right scan did not settle"


def check_assumptions(spec: DiffusionSpec, tol: float = 1e-10) -> AssumptionReport:
    """Scale criterion for ``X_t -> ell`` a.s.: s(ell+) finite, s(inf) infinite.

    Divergence is decided by a doubling heuristic; verdict texts say so.
    """
    verdicts = {}
    fitter = _BFitter(spec.g)
    unit = (spec.w - spec.ell) if math.isfinite(spec.ell) else 1.0
    try:
        scan = _scan_left(fitter, spec.ell, spec.w, 0.0, tol, unit)
        s_w = math.exp(np.logaddexp.reduce(np.concatenate([[scan.tail], scan.log_I])))
        ell_ok = True
        verdicts["ell"] = f"s(ell+) finite; s(w) - s(ell+) = {s_w:.10g} (heuristic)"
    except Divergent as exc:
        ell_ok = False
        verdicts["ell"] = f"s(ell+) divergent: {exc}"
    except (NonConvergence, NonFinite) as exc:
        ell_ok = False
        verdicts["ell"] = f"inconclusive: {exc}"
    try:
        inf_ok, text = _right_divergent(spec, tol)
    except (NonConvergence, NonFinite) as exc:
        inf_ok, text = False, f"inconclusive: {exc}"
    verdicts["infinity"] = ("s(inf) = inf; " if inf_ok else "s(inf) finite or undecided; ") + text + " (heuristic)"
    return AssumptionReport(
        s_ell_finite=ell_ok,
        s_infinity_infinite=inf_ok,
        boundary_verdicts=verdicts,
        overall="pass" if (ell_ok and inf_ok) else "fail",
    )


def driftless_zero_hit_test(sigma_factor, K: float = 1.0, tol: float = 1e-10) -> str:
    """Zero-hitting test for ``dY = sigma(Y) Y dW``.

    ``Y`` avoids 0 iff ``int_0^K dx / (x sigma(x)^2)`` diverges. Returns
    ``"no_hit"`` (divergent), ``"hits"`` (convergent) or ``"inconclusive"``.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    sig = sigma_factor if callable(sigma_factor) else _compile(sigma_factor)

    def f(x):
        s = sig(x)
        return 1.0 / (x * s * s)

    try:
        improper_lower_integral(f, 0.0, K, tol)
    except Divergent:
        return "no_hit"
    except NonConvergence:
        return "inconclusive"
    return "hits"


def _compile(e):
    from .coeffexpr import compile_expr, parse

    if isinstance(e, str):
        e = parse(e)
    return compile_expr(e)


def apply_generator(spec: DiffusionSpec, f, x: float, h: float = 1e-4, increment=None) -> float:
    """``(1/2) sigma^2 f'' + b f'`` at ``x`` by central differences.

    Pass ``increment`` (e.g. ``ScaleSpeed.increment`` when ``f`` is the scale
    function) to evaluate the stencil without cancellation.
    """
    d1, d2 = finite_difference_derivs(f, x, h, increment)
    return 0.5 * spec.variance(x) * d2 + spec.drift(x) * d1
