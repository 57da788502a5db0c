from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from idset_mc.criterion import Criterion, CriterionKind, DataSet
from idset_mc.models import get_model
from idset_mc.params import ParamSpace, flat_prior, to_unconstrained
from idset_mc.smc import (
    ConfigError,
    DegeneracyError,
    ParticleCloud,
    SmcConfig,
    adapt_scale,
    correction_step,
    ess,
    mutation_step,
    run_smc,
    selection_step,
    tempering_schedule,
    weighted_quantile,
)
from idset_mc.stats import ks_distance, normal_cdf


def make_cloud(log_crit, weights=None, thetas=None, space=None):
    B = len(log_crit)
    space = space or ParamSpace(np.zeros(1), np.ones(1))
    if thetas is None:
        thetas = np.full((B, 1), 0.5)
    w = np.ones(B) if weights is None else np.asarray(weights, dtype=float)
    return ParticleCloud(thetas, to_unconstrained(thetas, space), w, np.asarray(log_crit, dtype=float), np.zeros(B))


@dataclass
class Toy:
    criterion: Criterion
    prior: object
    space: ParamSpace


def bernoulli_model():
    space = ParamSpace(np.zeros(1), np.ones(1), names=("p",))

    def fn(t, data):
        k, n = data.stats["k"], data.n
        with np.errstate(divide="ignore"):
            return (k * np.log(t[:, 0]) + (n - k) * np.log1p(-t[:, 0])) / n

    crit = Criterion(CriterionKind.LOG_LIKELIHOOD, fn, space)
    data = DataSet.from_rows(np.r_[np.ones(30), np.zeros(20)], {"k": 30})
    return Toy(crit, flat_prior(space), space), data


def test_config_validation():
    with pytest.raises(ConfigError):
        SmcConfig(B=1)
    with pytest.raises(ConfigError):
        SmcConfig(J=1)
    with pytest.raises(ConfigError):
        SmcConfig(K=0)
    with pytest.raises(ConfigError):
        SmcConfig(ess_threshold_frac=1.0)
    with pytest.raises(ConfigError):
        SmcConfig(target_accept=0.0)
    c = SmcConfig()
    assert (c.J, c.lam, c.target_accept, c.ess_threshold_frac) == (200, 2.0, 0.35, 0.5)


def test_tempering_schedule():
    phi = tempering_schedule(200, 2.0)
    assert phi[0] == 0.0 and phi[-1] == 1.0
    assert phi[1] == pytest.approx((1 / 199) ** 2, rel=1e-14)
    assert abs(phi[1] - 2.525e-5) < 1e-8
    assert np.array_equal(tempering_schedule(2, 2.0), [0.0, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 500), st.floats(0.1, 10))
def test_tempering_monotone(J, lam):
    phi = tempering_schedule(J, lam)
    assert np.all(np.diff(phi) > 0)
    assert phi[0] == 0.0 and phi[-1] == 1.0


def test_correction_examples():
    c = correction_step(make_cloud([0.0, np.log(3.0)]), 0.0, 1.0)
    assert np.allclose(c.weights, [0.5, 1.5], atol=1e-14)
    same = correction_step(make_cloud([2.0, 2.0, 2.0], [0.5, 1.0, 1.5]), 0.1, 0.7)
    assert np.allclose(same.weights, [0.5, 1.0, 1.5], atol=1e-14)
    tiny = correction_step(make_cloud([0.0, 5.0, -3.0], [0.5, 1.0, 1.5]), 0.3, 0.3 + 1e-15)
    assert np.allclose(tiny.weights, [0.5, 1.0, 1.5], atol=1e-12)


def test_correction_large_values_do_not_overflow():
    c = correction_step(make_cloud([-1e6, -1e6 + np.log(3.0)]), 0.0, 1.0)
    assert np.allclose(c.weights, [0.5, 1.5], atol=1e-9)


def test_correction_degenerate_raises():
    with pytest.raises(DegeneracyError):
        correction_step(make_cloud([-np.inf, -np.inf]), 0.0, 0.5)


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.floats(-500, 500), min_size=2, max_size=40),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_weights_mean_one_after_correction(lc, a, b):
    lo, hi = sorted((a, b))
    c = correction_step(make_cloud(lc), lo, hi)
    assert abs(c.weights.mean() - 1.0) < 1e-10
    assert np.all(c.weights >= 0) and np.any(c.weights > 0)
    assert 1.0 - 1e-9 <= ess(c) <= len(lc) + 1e-9


def test_ess_examples():
    assert ess(np.ones(7)) == pytest.approx(7.0)
    assert ess(np.array([2.0, 0.0])) == pytest.approx(1.0)
    assert ess(np.array([2.0, 2.0, 0.0, 0.0])) == pytest.approx(2.0)


def test_selection_degenerate_and_equal():
    B = 6
    th = np.linspace(0.1, 0.9, B)[:, None]
    w = np.zeros(B)
    w[0] = B
    s = selection_step(make_cloud(np.zeros(B), w, th), np.random.default_rng(0))
    assert np.all(s.thetas == th[0])
    assert ess(s) == B and np.all(s.weights == 1.0)


def test_selection_frequencies_match_weights():
    B = 5
    w = np.array([0.2, 0.8, 1.0, 1.3, 1.7])
    th = np.arange(1, B + 1)[:, None] / (B + 1.0)
    rng = np.random.default_rng(1)
    counts = np.zeros(B)
    reps = 20_000
    for _ in range(reps):
        s = selection_step(make_cloud(np.zeros(B), w, th), rng)
        counts += np.bincount(np.rint(s.thetas[:, 0] * (B + 1)).astype(int) - 1, minlength=B)
    total = reps * B
    p = w / w.sum()
    se = np.sqrt(p * (1 - p) / total)
    assert np.all(np.abs(counts / total - p) < 3 * se)


def test_adapt_scale_values():
    assert adapt_scale(1.0, 0.35) == pytest.approx(1.0, abs=1e-15)
    assert adapt_scale(1.0, 1.0) == pytest.approx(0.95 + 0.10 / (1 + np.exp(-10.4)), abs=1e-12)
    assert abs(adapt_scale(1.0, 1.0) - 1.04997) < 1e-4
    assert abs(adapt_scale(1.0, 0.0) - 0.95037) < 1e-5
    assert adapt_scale(2.0, 0.6) == pytest.approx(2 * adapt_scale(1.0, 0.6))


def test_weighted_quantile_examples():
    v = np.arange(1, 101, dtype=float)
    assert weighted_quantile(v, np.ones(100), 0.95) == 95
    assert weighted_quantile([1.0, 2.0], [1.8, 0.2], 0.5) == 1.0
    assert weighted_quantile(v, np.ones(100), 1 - 1e-9) == 100


def normal_toy():
    space = ParamSpace(np.array([-12.0]), np.array([12.0]))
    crit = Criterion(CriterionKind.LOG_LIKELIHOOD, lambda t, d: -0.5 * t[:, 0] ** 2, space)
    return Toy(crit, flat_prior(space), space)


@pytest.mark.parametrize("L_blocks", [1, 2])
def test_mutation_preserves_target(L_blocks):
    toy = normal_toy()
    if L_blocks == 2:
        # two independent coordinates so that blocks are nontrivial
        space = ParamSpace(np.full(2, -12.0), np.full(2, 12.0))
        crit = Criterion(CriterionKind.LOG_LIKELIHOOD, lambda t, d: -0.5 * np.sum(t**2, axis=1), space)
        toy = Toy(crit, flat_prior(space), space)
    d = toy.space.dim
    rng = np.random.default_rng(11)
    th = rng.standard_normal((10_000, d))
    cloud = ParticleCloud(th, to_unconstrained(th, toy.space), np.ones(len(th)),
                          toy.criterion.eval(th, None), np.zeros(len(th)))
    out = mutation_step(cloud, 1.0, 5, L_blocks, lambda t: toy.criterion.eval(t, None), toy.prior, toy.space,
                        rng, sigma=0.05)
    assert 0.05 < out.accept_rate < 1.0
    for k in range(d):
        assert ks_distance(out.thetas[:, k], normal_cdf) < 0.02


def test_mutation_tiny_scale_accepts_everything():
    toy = normal_toy()
    rng = np.random.default_rng(0)
    th = rng.standard_normal((2000, 1))
    cloud = ParticleCloud(th, to_unconstrained(th, toy.space), np.ones(2000), toy.criterion.eval(th, None), np.zeros(2000))
    out = mutation_step(cloud, 1.0, 1, 1, lambda t: toy.criterion.eval(t, None), toy.prior, toy.space, rng, sigma=1e-9)
    assert out.accept_rate > 0.99


def test_conjugate_bernoulli_posterior():
    toy, data = bernoulli_model()
    cloud = run_smc(toy, data, SmcConfig(B=4000, J=100, seed=3))
    p = cloud.thetas[:, 0]
    w = cloud.weights / cloud.weights.sum()
    post = sps.beta(31, 21)
    mean = float(w @ p)
    mcse = post.std() / np.sqrt(4000 / np.mean(cloud.weights**2))
    assert abs(mean - 31 / 52) < 3 * max(mcse, 1e-3)
    for a in (0.1, 0.5, 0.9):
        assert abs(weighted_quantile(p, cloud.weights, a) - post.ppf(a)) < 0.02


def test_run_smc_determinism_and_invariants():
    model = get_model("missing-data-flat")
    data = model.simulate({"mu": 0.5, "eta1": 0.5, "eta2": 0.8}, 500, 1)
    a = run_smc(model, data, SmcConfig(B=300, J=30, seed=5))
    b = run_smc(model, data, SmcConfig(B=300, J=30, seed=5))
    assert np.array_equal(a.thetas, b.thetas)
    assert np.array_equal(a.weights, b.weights)
    assert a.diagnostics == b.diagnostics
    assert abs(a.weights.mean() - 1.0) < 1e-10
    assert a.phi == 1.0 and len(a.diagnostics) == 29
    c = run_smc(model, data, SmcConfig(B=300, J=30, seed=6))
    assert not np.array_equal(a.thetas, c.thetas)


def test_run_smc_stage_callback():
    model = get_model("missing-data-flat")
    data = model.simulate({"c": 1.0}, 200, 2)
    rows = []
    run_smc(model, data, SmcConfig(B=100, J=10, seed=0), on_stage=rows.append)
    assert [r["stage"] for r in rows] == list(range(2, 11))
    assert set(rows[0]) == {"stage", "phi", "ess", "sigma", "accept_rate", "logZ_increment"}
