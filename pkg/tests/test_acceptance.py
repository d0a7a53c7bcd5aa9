"""Acceptance criteria A1-A11 at their stated tolerances.

Each test records a one-line PASS/FAIL verdict (printed in the
"acceptance criteria" section of the pytest summary) and then asserts it.
"""

import math
import time

import numpy as np
import pytest

from doobcond.cli import main
from doobcond.conditioning import condition_to_infinity, conditioned_drift, h_transform_chars
from doobcond.diffusion import bm_drift, logistic
from doobcond.montecarlo import (
    SimConfig,
    explosion_profile,
    hitting_probability_mc,
    weighted_expectation,
)
from doobcond.numerics import finite_difference_derivs
from doobcond.scale import ScaleSpeed, build_scale_speed, driftless_zero_hit_test
from helpers import ks_grid, monotone_edges

MU, KAPPA, SIG = 0.5, 0.1, 1.2
VERIFY_ARGV = ["verify", "--model", "bm_drift:mu=0.5", "--x0", "0", "--lambda", "0.05", "--a", "8",
               "--t", "1", "--paths", "200000", "--direct-paths", "20000", "--ks-max", "0.03", "--seed", "1"]


def report_dict(text):
    out = {}
    for line in text.splitlines():
        for item in line.split(" "):
            if "=" in item:
                k, v = item.split("=", 1)
                out[k] = v
    return out


@pytest.fixture(scope="module")
def verify_run():
    import contextlib
    import io

    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code = main(VERIFY_ARGV + ["--threads", "1"])
    return code, buf.getvalue()


def test_a1_bm_drift_flip(criterion):
    start = time.perf_counter()
    spec = bm_drift(MU)
    ss = ScaleSpeed(spec, tol=1e-8)
    vals = [conditioned_drift(ss, spec, x) for x in (-3.0, 0.0, 7.0)]
    elapsed = time.perf_counter() - start
    err = max(abs(v - 0.5) for v in vals)
    ok = criterion("A1", err < 1e-6 and elapsed < 1.0, f"max|b_tilde-0.5|={err:.2e} runtime={elapsed:.2f}s")
    assert ok


def test_a2_generator_annihilates_scale(criterion):
    spec = logistic(MU, KAPPA, SIG)
    ss = build_scale_speed(spec)
    worst = 0.0
    for x in np.linspace(0.1, 10.0, 50):
        d1, d2 = finite_difference_derivs(ss.s, x, 1e-4, ss.increment)
        gen = 0.5 * spec.variance(x) * d2 + spec.drift(x) * d1
        denom = abs(spec.drift(x)) * ss.s_prime(x) + 0.5 * spec.variance(x) * abs(d2)
        worst = max(worst, abs(gen) / denom)
    assert criterion("A2", worst < 1e-5, f"max ratio={worst:.2e} (< 1e-5)")


def test_a3_rejection_vs_transform(criterion, verify_run):
    _, text = verify_run
    rep = report_dict(text)
    accepted = int(rep["accepted"])
    ks = float(rep["ks"]) if "ks" in rep else float("nan")
    ok = accepted >= 20_000 and ks < 0.03
    assert criterion("A3", ok, f"accepted={accepted} of {rep['total']} (need >= 20000) ks={ks:.4f} (< 0.03)")


def test_a4_order_of_limits_trend(criterion):
    ks, acc = ks_grid((4.0, 8.0, 12.0), (0.4, 0.1, 0.05), n=100_000, seed=3)
    good, total = monotone_edges(ks)
    detail = (f"nonincreasing edges={good}/{total} (need >= 10); accepted per cell "
              f"{acc.ravel().tolist()}; ks {np.round(ks, 4).ravel().tolist()}")
    assert criterion("A4", good >= 10, detail)


def test_a5_hitting_probability(criterion):
    cfg = SimConfig(0.0, 200.0, 0.05, 10_000, seed=1, lower_guard=-40.0)
    p, se = hitting_probability_mc(bm_drift(MU), 0.0, 1.0, cfg)
    z = (p - math.exp(-1.0)) / se
    assert criterion("A5", abs(z) <= 3.0, f"p_mc={p:.4f} se={se:.4f} exact={math.exp(-1):.5f} z={z:+.2f}")


def test_a6_logistic_asymptotics(criterion):
    cd = condition_to_infinity(logistic(MU, KAPPA, SIG))
    big = cd.b_tilde(40.0) / (MU * 40.0 + KAPPA * 1600.0)
    small = cd.b_tilde(1e-3) / 1e-3
    ok_big = 0.95 <= big <= 1.05
    ok_small = (SIG**2 - MU) * 0.98 <= small <= (SIG**2 - MU) * 1.02
    detail = (f"b_tilde(40)/(mu*40+kappa*1600)={big:.4f} in [0.95,1.05]: {ok_big}; "
              f"b_tilde(1e-3)/1e-3={small:.5f} in [0.9212,0.9588]: {ok_small}")
    assert criterion("A6", ok_big and ok_small, detail)


def test_a7_martingale_weight(criterion):
    spec = bm_drift(MU)
    est, se = weighted_expectation(spec, build_scale_speed(spec), lambda z: np.ones_like(z),
                                   SimConfig(0.0, 1.0, 0.05, 100_000, seed=2))
    assert criterion("A7", abs(est - 1.0) <= 3 * se, f"estimate={est:.4f} se={se:.4f}")


def test_a8_h_transform_product(criterion):
    ss = build_scale_speed(logistic(MU, KAPPA, SIG))
    xs = np.linspace(0.05, 20.0, 50)
    base = ss.s_prime(xs) * ss.m_prime(xs)
    worst = 0.0
    for h in (1.0, ss.s, "x + 1"):
        ch = h_transform_chars(ss, h, xs)
        worst = max(worst, float(np.max(np.abs(ch.s_h_prime * ch.m_h_prime / base - 1.0))))
    ident = h_transform_chars(ss, 1.0, xs)
    exact = np.array_equal(ident.s_h_prime, ss.s_prime(xs)) and np.array_equal(ident.m_h_prime, ss.m_prime(xs))
    assert criterion("A8", worst < 1e-10 and exact, f"max rel product error={worst:.1e}; h=1 exact: {exact}")


def test_a9_explosion(criterion):
    cfg = SimConfig(1.0, 1.0, 0.01, 2000, seed=1, explosion_cap=1e4)
    horizons = [2.0**k for k in range(7)]
    cd = condition_to_infinity(logistic(MU, KAPPA, SIG))
    frac = explosion_profile(cd, cfg, horizons)
    base = explosion_profile(logistic(MU, KAPPA, SIG), cfg, horizons)
    over = [t for t, f in zip(horizons, frac) if f > 0.5]
    ok = bool(np.all(np.diff(frac) >= 0)) and bool(over) and not np.any(base > 0)
    detail = (f"conditioned fractions {frac.tolist()} at t={horizons}; first t with > 0.5: "
              f"{over[0] if over else None}; base exploded={base[-1]}")
    assert criterion("A9", ok, detail)


def test_a10_zero_hit(criterion):
    got = [driftless_zero_hit_test(s) for s in ("1", "x^(-1/2)", "x^(-3/4)")]
    assert criterion("A10", got == ["no_hit", "hits", "hits"], f"verdicts={got}")


def test_a11_reproducible_verify(criterion, verify_run):
    import contextlib
    import io

    code1, first = verify_run
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        code2 = main(VERIFY_ARGV + ["--threads", "2"])
    same = first == buf.getvalue() and code1 == code2
    assert criterion("A11", same, f"byte-identical reports with --threads 1 and 2: {same} (exit {code1})")
