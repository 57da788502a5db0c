import numpy as np
import pytest

from idset_mc.criterion import QlrContext
from idset_mc.models import get_model
from idset_mc.models import missing_data as md
from idset_mc.models import moment_inequality as mi
from idset_mc.procedures import (
    CsKind,
    FullCS,
    IntervalCS,
    equivalence_set_profile,
    level_set_interval,
    percentile_cs,
    posterior_qlr_draws,
    procedure1,
    procedure2,
    procedure3,
    projection_cs,
)
from idset_mc.smc import SmcConfig, run_smc, weighted_quantile
from idset_mc.stats import chisq_quantile

LEVELS = (0.5, 0.8, 0.9, 0.95, 0.99)


@pytest.fixture(scope="module")
def md_run():
    model = get_model("missing-data-flat")
    data = model.simulate({"mu": 0.5, "eta1": 0.5, "eta2": 0.8}, 1000, 17)
    cloud = run_smc(model, data, SmcConfig(B=2000, seed=4))
    ctx = QlrContext(*model.criterion.fit(data), data.n)
    return model, data, cloud, ctx


def test_procedure1_duality(md_run):
    model, data, cloud, ctx = md_run
    cs = procedure1(cloud, ctx, 0.9, model.criterion, data)
    th = model.space.uniform(np.random.default_rng(0), 100)
    th = np.vstack([th, cloud.thetas[:100]])
    assert np.array_equal(cs.contains(th), cs.contains_by_qlr(th))
    assert cs.xi == pytest.approx(2 * ctx.n * (ctx.l_hat - cs.zeta))


def test_procedure1_extreme_level(md_run):
    model, data, cloud, ctx = md_run
    cs = procedure1(cloud, ctx, 1 - 1e-12, model.criterion, data)
    assert cs.zeta == pytest.approx(np.min(cloud.log_crit / data.n))
    assert np.all(cs.contains(cloud.thetas))


def test_posterior_qlr_nonnegative(md_run):
    model, data, cloud, ctx = md_run
    q = posterior_qlr_draws(cloud, ctx, model.criterion, data)
    assert np.all(q >= 0)
    assert np.allclose(q, posterior_qlr_draws(cloud, ctx))


def test_equivalence_sets(md_run):
    model, data, cloud, ctx = md_run
    lo, hi = model.m_oracle(cloud.thetas[:50])
    g11, g00 = md.reduced_form(cloud.thetas[:50])
    assert np.allclose(lo, g11) and np.allclose(hi, g11 + g00)
    # every point of Theta_I has the same equivalence set and profile value
    truth = md.md_identified_sets(0.4, 0.2)
    pl = equivalence_set_profile(model, truth.theta_points, data)
    ref = min(md.profile_loglik(np.array([0.4]), data)[0], md.profile_loglik(np.array([0.6]), data)[0])
    assert np.allclose(pl, ref, atol=1e-12)


def test_equivalence_interior_scan_agrees_for_quasiconcave_profile(md_run):
    model, data, cloud, ctx = md_run
    scan = equivalence_set_profile(model.__class__(**{**model.__dict__, "quasiconcave": False}),
                                   cloud.thetas[:200], data)
    ends = equivalence_set_profile(model, cloud.thetas[:200], data)
    assert np.allclose(scan, ends, atol=1e-14)


def test_procedure3_cutoff(md_run):
    model, data, cloud, ctx = md_run
    cs = procedure3(ctx, model, 0.95, data)
    assert cs.xi == pytest.approx(chisq_quantile(1, 0.95), rel=1e-10)
    assert abs(cs.xi - 3.8415) < 1e-4


def test_intervals_contain_estimate(md_run):
    model, data, cloud, ctx = md_run
    mu_hat = model.sub(ctx.theta_hat)
    for a in (0.9, 0.95):
        for cs in (procedure2(cloud, ctx, model, a, data), procedure3(ctx, model, a, data)):
            assert cs.lo <= mu_hat <= cs.hi


def test_nested_in_level(md_run):
    model, data, cloud, ctx = md_run
    th = np.vstack([cloud.thetas, model.space.uniform(np.random.default_rng(1), 2000)])
    prev = None
    for a in LEVELS:
        full = procedure1(cloud, ctx, a, model.criterion, data)
        sets = (
            procedure2(cloud, ctx, model, a, data),
            procedure3(ctx, model, a, data),
            projection_cs(full, model, data),
            percentile_cs(cloud, model.sub, a),
        )
        mem = full.contains(th)
        if prev is not None:
            assert np.all(mem[prev[0]])
            for old, new in zip(prev[1], sets):
                assert new.lo <= old.lo + 1e-12 and old.hi <= new.hi + 1e-12
        prev = (mem, sets)


def test_profile_duality_on_grid(md_run):
    model, data, cloud, ctx = md_run
    cs = procedure2(cloud, ctx, model, 0.9, data)
    mu = np.linspace(0.01, 0.99, 999)
    prof = model.profile(mu, data)
    assert np.array_equal(prof >= cs.zeta, 2 * ctx.n * (ctx.l_hat - prof) <= cs.xi)
    inside = mu[prof >= cs.zeta]
    assert abs(inside.min() - cs.lo) < 2e-3 and abs(inside.max() - cs.hi) < 2e-3


def test_projection_contains_profile_level_set(md_run):
    model, data, cloud, ctx = md_run
    full = procedure1(cloud, ctx, 0.9, model.criterion, data)
    proj = projection_cs(full, model, data)
    mu = np.linspace(0.01, 0.99, 981)
    inside = mu[model.profile(mu, data) >= full.zeta]
    assert proj.lo <= inside.min() + 1e-4 and inside.max() <= proj.hi + 1e-4
    # the projection keeps every mu reached by a member of the full set
    mem = full.contains(cloud.thetas)
    assert proj.lo <= cloud.thetas[mem, 0].min() + 1e-4 and cloud.thetas[mem, 0].max() <= proj.hi + 1e-4


def test_projection_of_whole_space(md_run):
    model, data, cloud, ctx = md_run
    everything = FullCS(-np.inf, np.inf, 0.99, ctx, model.criterion, data)
    proj = projection_cs(everything, model, data)
    assert (proj.lo, proj.hi) == model.mu_bounds


def test_percentile_uses_equal_tails(md_run):
    model, data, cloud, ctx = md_run
    cs = percentile_cs(cloud, model.sub, 0.9)
    assert cs.lo == weighted_quantile(cloud.thetas[:, 0], cloud.weights, 0.05)
    assert cs.hi == weighted_quantile(cloud.thetas[:, 0], cloud.weights, 0.95)
    assert cs.kind == CsKind.PERCENTILE


def test_level_validation(md_run):
    model, data, cloud, ctx = md_run
    with pytest.raises(ValueError):
        procedure1(cloud, ctx, 1.0)
    with pytest.raises(ValueError):
        percentile_cs(cloud, model.sub, 0.0)


def test_interval_covers_and_dict():
    cs = IntervalCS(CsKind.PROCEDURE2, 0.9, 0.4, 0.6, zeta=-1.0, xi=2.0)
    assert cs.covers(0.45, 0.55) and not cs.covers(0.39, 0.5)
    d = cs.to_dict()
    assert set(d) == {"kind", "level", "lo", "hi", "zeta", "xi", "disconnected"}
    assert d["kind"] == "procedure2"
    with pytest.raises(ValueError):
        IntervalCS(CsKind.PROCEDURE3, 0.9, 0.6, 0.4)


def test_level_set_interval_disconnected():
    f = lambda x: np.maximum(-((x - 0.2) ** 2), -((x - 0.8) ** 2))  # noqa: E731
    lo, hi, disc = level_set_interval(f, -0.01, 0.0, 1.0, center=0.2)
    assert disc
    assert abs(lo - 0.1) < 1e-4 and abs(hi - 0.9) < 1e-4
    lo, hi, disc = level_set_interval(lambda x: -((x - 0.5) ** 2), -0.04, 0.0, 1.0, center=0.5)
    assert not disc and abs(lo - 0.3) < 1e-4 and abs(hi - 0.7) < 1e-4


def test_moment_inequality_procedure2_closed_form():
    model = get_model("moment-inequality")
    n = 1000
    data = model.simulate({"mu_star": 0.2}, n, 5)
    cloud = run_smc(model, data, SmcConfig(B=5000, seed=1))
    ctx = QlrContext(*model.criterion.fit(data), n)
    xbar = data.stats["mean"]
    v = np.sqrt(n) * xbar
    for a in (0.9, 0.95):
        cs = procedure2(cloud, ctx, model, a, data)
        xi = mi.mi_closed_form_posterior_quantile(v, a)
        # {mu : n ((mu - Xbar) v 0)^2 <= xi} = [0, Xbar + sqrt(xi / n)] for Xbar > 0
        assert cs.lo == 0.0
        assert abs(cs.hi - (xbar + np.sqrt(xi / n))) < 0.01
