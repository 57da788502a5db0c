"""Scalar moment inequality ``E[X] >= mu >= 0`` written as an equality with slack.

With ``theta = (mu, eta)``, ``mu, eta >= 0``, the criterion is
``L_n(mu, eta) = -0.5 (mu + eta - Xbar)^2`` and ``M_I = [0, mu*]`` where
``mu* = E[X]``.  The data are ``X_i ~ N(mu*, 1)``.

The preset prior makes ``gamma = mu + eta`` uniform: the space is the triangle
``{mu, eta >= 0, mu + eta <= upper}`` and the density on it is proportional to
``1 / (mu + eta)``.

The recentered variant replaces ``Xbar`` by ``Xbar v 0``.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..criterion import Criterion, CriterionKind, DataSet
from ..params import ParamSpace, Prior, PriorKind, SubvectorMap
from ..stats import normal_inv
from .base import ModelSpec, TrueSets

UPPER = 2.0
NAMES = ("mu", "eta")


def _feasible(t):
    return t[:, 0] + t[:, 1] <= UPPER


SPACE = ParamSpace(np.zeros(2), np.full(2, UPPER), _feasible, NAMES)
SUB = SubvectorMap((0,), 2)


def make_data(x) -> DataSet:
    x = np.asarray(x, dtype=float).ravel()
    return DataSet.from_rows(x, {"mean": float(np.mean(x))})


def _center(data: DataSet, recentered: bool) -> float:
    xbar = data.stats["mean"]
    return max(xbar, 0.0) if recentered else xbar


def mi_criterion(theta, data: DataSet, recentered: bool = False):
    """``-0.5 (mu + eta - Xbar)^2`` (``Xbar v 0`` when recentered)."""
    t = np.atleast_2d(np.asarray(theta, dtype=float))
    out = -0.5 * (t[:, 0] + t[:, 1] - _center(data, recentered)) ** 2
    return float(out[0]) if np.ndim(theta) == 1 else out


def profile(mu, data: DataSet, recentered: bool = False) -> np.ndarray:
    """``sup_eta L_n(mu, eta) = -0.5 dist(Xbar, [mu, upper])^2``."""
    c = _center(data, recentered)
    mu = np.asarray(mu, dtype=float)
    return -0.5 * (np.clip(c, mu, UPPER) - c) ** 2


def fit(data: DataSet, recentered: bool = False):
    c = _center(data, recentered)
    g = float(np.clip(c, 0.0, UPPER))
    return -0.5 * (g - c) ** 2, np.array([0.0, g])


def mi_m_oracle(thetas):
    t = np.atleast_2d(thetas)
    return np.zeros(t.shape[0]), t[:, 0] + t[:, 1]


def profile_qlr_at_truth(data: DataSet, mu_star: float) -> float:
    """``PQ_n(M_I) = (V_n ^ 0)^2 - ((V_n + sqrt(n) mu*) ^ 0)^2``, ``V_n = sqrt(n)(Xbar - mu*)``."""
    n = data.n
    v = np.sqrt(n) * (data.stats["mean"] - mu_star)
    return float(min(v, 0.0) ** 2 - min(v + np.sqrt(n) * mu_star, 0.0) ** 2)


def mi_closed_form_posterior_quantile(v_n: float, alpha: float) -> float:
    """Posterior ``alpha`` quantile of the profile QLR under a flat prior on ``mu + eta``.

    ``Phi^-1((1 - alpha) Phi(v_n))^2``, minus ``v_n^2`` when ``v_n < 0``.
    """
    q = normal_inv((1.0 - alpha) * special.ndtr(v_n)) ** 2
    return float(q - v_n**2) if v_n < 0 else float(q)


def mi_bootstrap_profile_qlr(data: DataSet, n_boot: int, alpha: float, seed) -> float:
    """Bootstrap ``alpha`` quantile of the profile QLR at the plug-in ``[0, Xbar v 0]``.

    For a bootstrap mean ``X*`` the profile QLR of ``[0, Xbar v 0]`` is
    ``n ((Xbar v 0 - X*) v 0)^2 - n (X* ^ 0)^2``.
    """
    if n_boot < 100:
        raise ValueError("n_boot must be at least 100")
    x = np.asarray(data.rows, dtype=float)
    n = x.size
    rng = np.random.default_rng(seed)
    # resample in chunks to bound memory
    means = np.empty(n_boot)
    step = max(1, 2_000_000 // n)
    for s in range(0, n_boot, step):
        m = min(step, n_boot - s)
        idx = rng.integers(n, size=(m, n))
        means[s : s + m] = x[idx].mean(axis=1)
    top = max(float(np.mean(x)), 0.0)
    pq = n * np.maximum(top - means, 0.0) ** 2 - n * np.minimum(means, 0.0) ** 2
    return float(np.quantile(pq, alpha, method="inverted_cdf"))


def _log_prior(t):
    with np.errstate(divide="ignore"):
        return -np.log(t[:, 0] + t[:, 1])


def _sample_prior(rng, size):
    g = rng.uniform(0.0, UPPER, size)
    mu = g * rng.uniform(size=size)
    return np.column_stack([mu, g - mu])


PRIOR = Prior(PriorKind.CUSTOM, SPACE, _log_prior, _sample_prior)


def simulate_moment_inequality(dgp: dict, n: int, seed) -> DataSet:
    """``n`` draws from ``N(mu*, 1)``; ``dgp`` holds ``mu_star`` or ``c`` (``mu* = c / sqrt(n)``)."""
    mu_star = resolve_mu_star(dgp, n)
    rng = np.random.default_rng(seed)
    return make_data(mu_star + rng.standard_normal(n))


def resolve_mu_star(dgp: dict, n: int) -> float:
    if dgp.get("mu_star") is not None:
        return float(dgp["mu_star"])
    return float(dgp.get("c", 0.0)) / np.sqrt(n)


def _truth(dgp: dict, n: int) -> TrueSets:
    mu_star = resolve_mu_star(dgp, n)
    mu = np.linspace(0.0, mu_star, 200)
    pts = np.column_stack([mu, mu_star - mu])

    def pred(t):
        t = np.atleast_2d(t)
        return SPACE.contains(t) & (np.abs(t[:, 0] + t[:, 1] - mu_star) <= 1e-12)

    return TrueSets(pred, (0.0, mu_star), pts)


def moment_inequality_model(recentered: bool = False) -> ModelSpec:
    crit = Criterion(
        CriterionKind.OPTIMAL_GMM,
        lambda t, d: mi_criterion(t, d, recentered),
        SPACE,
        fit=lambda d, starts=None: fit(d, recentered),
        profile=lambda mu, d: profile(mu, d, recentered),
    )
    return ModelSpec(
        name="moment-inequality-recentered" if recentered else "moment-inequality",
        space=SPACE,
        criterion=crit,
        prior=PRIOR,
        sub=SUB,
        m_oracle=mi_m_oracle,
        simulate=simulate_moment_inequality,
        truth=_truth,
        quasiconcave=True,
        smc_defaults={"K": 1, "L_blocks": 1},
        default_dgp={"mu_star": 0.2},
    )


__all__ = [
    "PRIOR",
    "SPACE",
    "make_data",
    "mi_bootstrap_profile_qlr",
    "mi_closed_form_posterior_quantile",
    "mi_criterion",
    "mi_m_oracle",
    "moment_inequality_model",
    "profile",
    "profile_qlr_at_truth",
    "simulate_moment_inequality",
]
