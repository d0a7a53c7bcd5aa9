import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from doobcond.conditioning import condition_to_infinity
from doobcond.diffusion import bm_drift, gbm, logistic
from doobcond.errors import ConfigInvalid, EmptySample, NoAcceptedPaths, UnsupportedPreset
from doobcond.montecarlo import (
    ALIVE,
    EXPLODED,
    HIT_LOWER,
    NONFINITE,
    EmpiricalDistribution,
    KillCondSetup,
    SimConfig,
    exact_sampler,
    explosion_profile,
    hitting_probability_mc,
    ks_statistic,
    simulate_killed_conditioned,
    simulate_model,
    simulate_paths,
    weighted_expectation,
)
from doobcond.scale import build_scale_speed

zero = lambda x: np.zeros_like(x)


def test_config_validation():
    SimConfig(1.0, 1.0, 0.1, 10, lower_guard=0.5).validate(0.0)
    SimConfig(1.0, 0.0, 0.1, 10, lower_guard=0.5).validate(0.0)
    bad = [
        dict(dt=0.0), dict(dt=2.0), dict(t_end=-1.0), dict(n_paths=0), dict(n_paths=2.5),
        dict(lower_guard=1.5), dict(lower_guard=-0.1), dict(explosion_cap=0.9), dict(record="all"),
    ]
    for kw in bad:
        args = dict(x0=1.0, t_end=1.0, dt=0.1, n_paths=10, lower_guard=0.5)
        args.update(kw)
        with pytest.raises(ConfigInvalid):
            SimConfig(**args).validate(0.0)


def test_default_guards():
    assert SimConfig(2.0, 1.0, 0.1, 1).resolve(0.0).lower_guard == pytest.approx(2e-8)
    assert SimConfig(2.0, 1.0, 0.1, 1).resolve(-math.inf).lower_guard == -1e8


def test_trivial_coefficients():
    cfg = SimConfig(1.0, 1.0, 0.1, 50, record="full_path")
    ens = simulate_paths(zero, zero, cfg)
    assert np.all(ens.values == 1.0)
    assert ens.values.shape == (50, 11)
    assert np.all(ens.flags == ALIVE)
    assert ens.counts()["alive"] == 50


def test_bm_drift_moments():
    n = 100_000
    ens = simulate_model(bm_drift(0.5), SimConfig(0.0, 1.0, 0.01, n, seed=3))
    m = ens.marginal()
    assert abs(m.mean() - (-0.5)) < 3 / math.sqrt(n)
    assert abs(m.var() - 1.0) < 3 * math.sqrt(2 / n)


def test_euler_drift_error_is_first_order():
    # with sigma = 0 the scheme is (1 + mu dt)^n against exp(mu t)
    mu = 0.8
    errs = []
    for dt in (1e-2, 5e-3):
        ens = simulate_paths(lambda x: mu * x, zero, SimConfig(1.0, 1.0, dt, 1, lower_guard=0.5))
        errs.append(abs(ens.terminal[0] - math.exp(mu)))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.02)


def test_thread_count_does_not_change_results():
    spec = logistic(0.5, 0.1, 1.2)
    cfg = SimConfig(1.0, 2.0, 0.05, 9000, seed=11)
    a = simulate_model(spec, cfg, threads=1)
    b = simulate_model(spec, cfg, threads=4)
    assert np.array_equal(a.values, b.values)
    assert np.array_equal(a.flags, b.flags)
    c = simulate_model(spec, SimConfig(1.0, 2.0, 0.05, 9000, seed=12), threads=4)
    assert not np.array_equal(a.values, c.values)


def test_partial_final_step():
    ens = simulate_paths(lambda x: np.ones_like(x), zero, SimConfig(0.0, 1.05, 0.1, 2, lower_guard=-1.0))
    assert ens.terminal == pytest.approx([1.05, 1.05])


def test_lower_guard_and_cap():
    down = simulate_paths(lambda x: -np.ones_like(x), zero, SimConfig(1.0, 2.0, 0.3, 3, lower_guard=0.0))
    assert np.all(down.flags == HIT_LOWER) and np.all(down.terminal == 0.0)
    up = simulate_paths(lambda x: np.ones_like(x), zero, SimConfig(1.0, 2.0, 0.3, 3, lower_guard=0.0, explosion_cap=2.0))
    assert np.all(up.flags == EXPLODED) and np.all(up.terminal == 2.0)
    assert np.allclose(up.flag_time, 1.2)


def test_nonfinite_flag_only_affects_path():
    def drift(x):
        if np.any(x > 0.5):
            raise ArithmeticError("boom")
        return np.zeros_like(x)

    ens = simulate_paths(drift, lambda x: np.ones_like(x), SimConfig(0.0, 1.0, 0.1, 200, lower_guard=-1e6))
    assert np.any(ens.flags == NONFINITE)
    assert np.any(ens.flags == ALIVE)
    assert ens.marginal().n == int(np.sum(ens.flags != NONFINITE))


def test_csv_outputs():
    ens = simulate_paths(zero, zero, SimConfig(1.0, 0.2, 0.1, 2, record="full_path"))
    text = ens.to_csv().splitlines()
    assert text[0] == "path_id,flag,t,value"
    assert text[1] == "0,alive,0,1"
    assert len(text) == 1 + 2 * 3
    assert EmpiricalDistribution([2.0, 1.0]).to_csv() == "value\n1\n2\n"


def test_exact_sampler_examples():
    d = exact_sampler("gbm", 2.0, 1.5, 10, mu=0.1, sigma=0.0)
    assert np.allclose(d.samples, 2.0 * math.exp(0.15), rtol=1e-15)
    n = 40_000
    g = exact_sampler("gbm", 1.0, 1.0, n, seed=1, mu=0.1, sigma=1.0)
    assert abs(np.mean(np.log(g.samples)) - (-0.4)) < 3 / math.sqrt(n)
    b = exact_sampler("bm_drift", 0.0, 4.0, n, seed=2, mu=0.5)
    assert abs(b.mean() - (-2.0)) < 3 * 2 / math.sqrt(n)
    c = exact_sampler(bm_drift(0.5), 0.0, 4.0, n, seed=2, conditioned=True)
    assert abs(c.mean() - 2.0) < 3 * 2 / math.sqrt(n)
    gc = exact_sampler(gbm(0.1, 1.0), 1.0, 1.0, n, seed=1, conditioned=True)
    # conditioned GBM has rate sigma^2 - mu = 0.9
    assert abs(np.mean(np.log(gc.samples)) - 0.4) < 3 / math.sqrt(n)


def test_exact_sampler_errors():
    with pytest.raises(UnsupportedPreset):
        exact_sampler("logistic", 1.0, 1.0, 10)
    with pytest.raises(UnsupportedPreset):
        exact_sampler(logistic(), 1.0, 1.0, 10)
    with pytest.raises(ConfigInvalid):
        exact_sampler("bm_drift", 0.0, 1.0, 0)


def test_euler_matches_exact_law_for_bm():
    n = 20_000
    sim = simulate_model(bm_drift(0.5), SimConfig(0.0, 1.0, 0.05, n, seed=9)).marginal()
    ex = exact_sampler("bm_drift", 0.0, 1.0, n, seed=9, mu=0.5)
    assert ks_statistic(sim, ex) < 1.63 * math.sqrt(2 / n)


def test_killed_conditioned_t_obs_zero():
    res = simulate_killed_conditioned(bm_drift(0.5), KillCondSetup(0.4, 1.0, 0.0), SimConfig(0.0, 1.0, 0.1, 2000, seed=1))
    assert np.all(res.samples.samples == 0.0)
    assert res.summary_line.startswith(f"accepted={res.accepted} total=2000 acc_prob=")


def test_killed_acceptance_exact_law():
    # For BM with drift -mu, X(zeta) with zeta ~ Exp(lam) is asymmetric Laplace:
    # P(X(zeta) > a) = alpha/(alpha + beta) exp(-beta a), a >= 0, where
    # beta = mu + r, alpha = -mu + r, r = sqrt(mu^2 + 2 lam). Euler is exact here.
    mu, lam, a, n = 0.5, 0.4, 1.0, 40_000
    r = math.sqrt(mu * mu + 2 * lam)
    alpha, beta = r - mu, r + mu
    p = alpha / (alpha + beta) * math.exp(-beta * a)
    res = simulate_killed_conditioned(bm_drift(mu), KillCondSetup(lam, a, 0.0), SimConfig(0.0, 1.0, 0.1, n, seed=4))
    assert abs(res.acc_prob - p) < 4 * math.sqrt(p * (1 - p) / n)


def test_acceptance_nonincreasing_in_a():
    cfg = SimConfig(0.0, 1.0, 0.05, 20_000, seed=2)
    probs = [simulate_killed_conditioned(bm_drift(0.5), KillCondSetup(0.4, a, 1.0), cfg).acc_prob for a in (0.5, 1.0, 2.0)]
    assert probs[0] >= probs[1] >= probs[2] > 0


def test_no_accepted_paths():
    with pytest.raises(NoAcceptedPaths):
        simulate_killed_conditioned(bm_drift(0.5), KillCondSetup(50.0, 5.0, 0.0), SimConfig(0.0, 1.0, 0.1, 100))


def test_killed_conditioned_config_errors():
    spec = bm_drift(0.5)
    with pytest.raises(ConfigInvalid):
        simulate_killed_conditioned(spec, KillCondSetup(0.4, 1.0, 2.0), SimConfig(0.0, 1.0, 0.1, 10))
    with pytest.raises(ConfigInvalid):
        simulate_killed_conditioned(spec, KillCondSetup(0.4, 1.0, 0.25), SimConfig(0.0, 1.0, 0.1, 10))
    with pytest.raises(ConfigInvalid):
        simulate_killed_conditioned(spec, KillCondSetup(0.0, 1.0, 0.0), SimConfig(0.0, 1.0, 0.1, 10))


def test_killed_conditioned_deterministic_across_threads():
    cfg = SimConfig(0.0, 1.0, 0.05, 10_000, seed=8)
    a = simulate_killed_conditioned(bm_drift(0.5), KillCondSetup(0.4, 1.0, 1.0), cfg, threads=1)
    b = simulate_killed_conditioned(bm_drift(0.5), KillCondSetup(0.4, 1.0, 1.0), cfg, threads=3)
    assert a.accepted == b.accepted and np.array_equal(a.samples.samples, b.samples.samples)


def test_weighted_expectation_martingale():
    spec = bm_drift(0.5)
    ss = build_scale_speed(spec)
    est, se = weighted_expectation(spec, ss, lambda z: 1.0, SimConfig(0.0, 1.0, 0.05, 50_000, seed=6))
    assert abs(est - 1.0) < 3 * se


def test_weighted_expectation_time_zero():
    spec = logistic()
    ss = build_scale_speed(spec)
    est, se = weighted_expectation(spec, ss, lambda z: z**2, SimConfig(1.5, 0.0, 0.1, 10))
    assert est == 1.5**2 and se == 0.0


def test_weighted_vs_direct_indicator():
    spec = bm_drift(0.5)
    ss = build_scale_speed(spec)
    g = lambda z: (z > 0.0).astype(float)
    est, se = weighted_expectation(spec, ss, g, SimConfig(0.0, 1.0, 0.05, 50_000, seed=7))
    direct = exact_sampler("bm_drift", 0.0, 1.0, 50_000, seed=7, mu=0.5, conditioned=True)
    p = np.mean(direct.samples > 0)
    se_d = math.sqrt(p * (1 - p) / direct.n)
    assert abs(est - p) < 3 * math.hypot(se, se_d)


@pytest.mark.parametrize("a,b,d", [
    ([0.3, 1.2], [0.3, 1.2], 0.0),
    ([0.0], [1.0], 1.0),
    ([0.0, 1.0], [0.5, 1.5], 0.5),
    ([0.0, 0.0, 1.0], [0.0, 1.0, 1.0], 1 / 3),
])
def test_ks_examples(a, b, d):
    assert ks_statistic(EmpiricalDistribution(a), EmpiricalDistribution(b)) == pytest.approx(d, abs=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-5, 5), min_size=1, max_size=40), st.lists(st.integers(-5, 5), min_size=1, max_size=40))
@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_ks_matches_scipy(a, b):
    ours = ks_statistic(EmpiricalDistribution(a), EmpiricalDistribution(b))
    assert ours == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-12)
    assert ours == ks_statistic(EmpiricalDistribution(b), EmpiricalDistribution(a))


def test_ks_empty():
    with pytest.raises(EmptySample):
        ks_statistic(EmpiricalDistribution([]), EmpiricalDistribution([1.0]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=30), st.floats(-11, 11))
def test_empirical_cdf(xs, x):
    e = EmpiricalDistribution(xs)
    assert np.all(np.diff(e.samples) >= 0)
    assert e.cdf(x) == sum(v <= x for v in xs) / len(xs)
    assert e.cdf(max(xs)) == 1.0


def test_explosion_profile_trivial():
    frac = explosion_profile(SimpleNamespace(drift=zero, vol=zero, ell=0.0),
                             SimConfig(1.0, 1.0, 0.1, 20), [0.5, 1.0])
    assert np.all(frac == 0.0)


def test_conditioned_bm_does_not_explode():
    cd = condition_to_infinity(bm_drift(0.5))
    frac = explosion_profile(cd, SimConfig(0.0, 1.0, 0.05, 2000, explosion_cap=1e4), [1.0, 5.0, 10.0])
    assert np.all(frac < 0.01)


def test_conditioned_logistic_explosion_monotone():
    cd = condition_to_infinity(logistic(0.5, 0.1, 1.2))
    frac = explosion_profile(cd, SimConfig(1.0, 1.0, 0.02, 1000, seed=1, explosion_cap=1e4), [2.0, 4.0, 8.0, 16.0])
    assert np.all(np.diff(frac) >= 0)
    assert frac[-1] > frac[0]


def test_conditioned_paths_avoid_left_end():
    cd = condition_to_infinity(logistic(0.5, 0.1, 1.2))
    ens = simulate_model(cd, SimConfig(1.0, 4.0, 0.01, 2000, seed=3, explosion_cap=1e4))
    assert np.mean(ens.flags == HIT_LOWER) < 1e-3


def test_hitting_probability_mc():
    p, se = hitting_probability_mc(bm_drift(0.5), 0.0, 1.0, SimConfig(0.0, 40.0, 0.05, 4000, seed=2, lower_guard=-30.0))
    assert abs(p - math.exp(-1.0)) < 4 * se
    assert hitting_probability_mc(bm_drift(0.5), 2.0, 1.0, SimConfig(0.0, 1.0, 0.1, 10)) == (1.0, 0.0)
