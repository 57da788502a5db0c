"""Uniform model whose support depends on the parameter.

``X_i ~ U[0, theta1 v theta2]`` with ``theta`` in the box ``[0, upper]^2``.
If the data come from ``U[0, g]`` the identified set is the L-shaped set
``{theta1 v theta2 = g}``.  The QLR has a Gamma(1, 2) rather than chi-square
limit.
"""

from __future__ import annotations

import numpy as np

from ..criterion import Criterion, CriterionKind, DataSet
from ..params import ParamSpace, SubvectorMap, flat_prior
from .base import ModelSpec, TrueSets

UPPER = 2.0
SPACE = ParamSpace(np.zeros(2), np.full(2, UPPER), names=("theta1", "theta2"))
SUB = SubvectorMap((0,), 2)


def make_data(x) -> DataSet:
    x = np.asarray(x, dtype=float).ravel()
    if np.any(x < 0):
        raise ValueError("observations must be nonnegative")
    return DataSet.from_rows(x, {"max": float(np.max(x))})


def uniform_support_loglik(theta, data: DataSet):
    """Average log-likelihood ``-log(theta1 v theta2)``, ``-inf`` below the sample maximum."""
    t = np.atleast_2d(np.asarray(theta, dtype=float))
    top = np.max(t, axis=1)
    with np.errstate(divide="ignore"):
        out = np.where(top >= data.stats["max"], -np.log(top), -np.inf)
    return float(out[0]) if np.ndim(theta) == 1 else out


def qlr_closed_form(data: DataSet, g_true: float) -> float:
    """``sup`` of the QLR over the identified set: ``2n log(g / max X)``."""
    return float(2.0 * data.n * np.log(g_true / data.stats["max"]))


def _fit(data: DataSet, starts=None):
    m = data.stats["max"]
    return -np.log(m), np.array([m, 0.0])


def _profile(mu, data: DataSet):
    # sup over theta2 of -log(max(mu, theta2)) subject to the support condition
    m = data.stats["max"]
    mu = np.asarray(mu, dtype=float)
    with np.errstate(divide="ignore"):
        return -np.log(np.maximum(mu, m))


def simulate_uniform(dgp: dict, n: int, seed) -> DataSet:
    rng = np.random.default_rng(seed)
    return make_data(rng.uniform(0.0, float(dgp.get("g", 1.0)), n))


def _truth(dgp: dict, n: int) -> TrueSets:
    g = float(dgp.get("g", 1.0))
    s = np.linspace(0.0, g, 100)
    pts = np.vstack([np.column_stack([np.full(100, g), s]), np.column_stack([s, np.full(100, g)])])

    def pred(t):
        t = np.atleast_2d(t)
        return SPACE.contains(t) & (np.abs(np.max(t, axis=1) - g) <= 1e-12)

    return TrueSets(pred, (0.0, g), pts)


def _m_oracle(thetas):
    # any theta1 in [0, g] pairs with theta2 = g, where g = theta1 v theta2
    t = np.atleast_2d(thetas)
    return np.zeros(t.shape[0]), np.max(t, axis=1)


LOGLIK = Criterion(
    CriterionKind.LOG_LIKELIHOOD,
    lambda t, d: uniform_support_loglik(t, d),
    SPACE,
    fit=_fit,
    profile=_profile,
)


def uniform_support_model() -> ModelSpec:
    return ModelSpec(
        name="uniform-support",
        space=SPACE,
        criterion=LOGLIK,
        prior=flat_prior(SPACE),
        sub=SUB,
        m_oracle=_m_oracle,
        simulate=simulate_uniform,
        truth=_truth,
        quasiconcave=True,
        smc_defaults={"K": 1, "L_blocks": 1},
        default_dgp={"g": 1.0},
    )


__all__ = [
    "SPACE",
    "make_data",
    "qlr_closed_form",
    "simulate_uniform",
    "uniform_support_loglik",
    "uniform_support_model",
]
