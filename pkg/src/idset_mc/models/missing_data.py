"""Missing-outcome model.

An outcome ``Y`` in {0, 1} is observed only when ``D = 1``.  With
``mu = P(Y = 1)``, ``eta1 = P(Y = 1 | D = 0)`` and ``eta2 = P(D = 1)``, the data
``(D, Y D)`` identify the reduced form

    g11 = P(D = 1, Y = 1) = mu - eta1 (1 - eta2),   g00 = P(D = 0) = 1 - eta2,

so ``mu`` is only partially identified unless ``eta2 = 1``.  The parameter
space is ``{theta in [0, 1]^3 : 0 <= mu - eta1 (1 - eta2) <= eta2}``.

Data rows are ``(D, Y D)`` pairs; the data set caches the counts of the three
possible records.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..criterion import Criterion, CriterionKind, DataSet, pinv_psd_batch
from ..params import ParamSpace, SubvectorMap, flat_prior, md_curved_prior
from ..stats import DomainError
from .base import ModelSpec, TrueSets

NAMES = ("mu", "eta1", "eta2")
# distinct records (D, YD) in the order used for cached counts
RECORDS = np.array([[1, 1], [1, 0], [0, 0]])


def _feasible(t: np.ndarray) -> np.ndarray:
    g11 = t[:, 0] - t[:, 1] * (1.0 - t[:, 2])
    return (g11 >= 0.0) & (g11 <= t[:, 2])


SPACE = ParamSpace(np.zeros(3), np.ones(3), _feasible, NAMES)
SUB = SubvectorMap((0,), 3)


def reduced_form(thetas):
    """``(g11, g00)`` without feasibility checks; works on ``(..., 3)`` arrays."""
    t = np.asarray(thetas, dtype=float)
    return t[..., 0] - t[..., 1] * (1.0 - t[..., 2]), 1.0 - t[..., 2]


def md_reduced_form(theta):
    """Reduced-form probabilities ``(g11, g00)`` of a feasible ``theta``."""
    t = np.asarray(theta, dtype=float)
    if not np.all(SPACE.contains(t)):
        raise DomainError(f"theta={theta!r} is outside the parameter space")
    g11, g00 = reduced_form(t)
    if t.ndim == 1:
        return float(g11), float(g00)
    return g11, g00


def counts_of(rows) -> np.ndarray:
    rows = np.asarray(rows)
    d, yd = rows[:, 0], rows[:, 1]
    return np.array([np.sum((d == 1) & (yd == 1)), np.sum((d == 1) & (yd == 0)), np.sum(d == 0)], dtype=float)


def make_data(rows) -> DataSet:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 2 or rows.shape[1] != 2:
        raise ValueError("missing-data rows must be (D, YD) pairs")
    if np.any((rows < 0) | (rows > 1)) or np.any(rows[:, 1] > rows[:, 0]):
        raise ValueError("records must lie in {(0,0), (1,0), (1,1)}")
    return DataSet.from_rows(rows, {"counts": counts_of(rows)})


def _freqs(data: DataSet) -> np.ndarray:
    return data.stats["counts"] / data.n


def loglik_from_probs(p11, p10, p00, freqs) -> np.ndarray:
    """Average multinomial log-likelihood with the convention ``0 log 0 = 0``."""
    a, b, c = freqs
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.xlogy(a, p11) + special.xlogy(b, p10) + special.xlogy(c, p00)
    return np.where(np.isnan(out), -np.inf, out)


def md_loglik(theta, data: DataSet):
    """Average log-likelihood of ``(D, YD)`` records; ``-inf`` off the support."""
    t = np.atleast_2d(np.asarray(theta, dtype=float))
    g11, g00 = reduced_form(t)
    g10 = np.clip(1.0 - g11 - g00, 0.0, 1.0)
    out = loglik_from_probs(g11, g10, g00, _freqs(data))
    out = np.where(SPACE.contains(t), out, -np.inf)
    return float(out[0]) if np.ndim(theta) == 1 else out


def entropy_value(freqs) -> float:
    """``sum p log p`` over the three cells: the maximized average log-likelihood."""
    return float(np.sum(special.xlogy(freqs, freqs)))


def fitted_theta(freqs) -> np.ndarray:
    """A parameter value whose reduced form equals the empirical frequencies."""
    a, _, c = freqs
    eta1 = 0.5
    return np.array([a + eta1 * c, eta1, 1.0 - c])


def profile_loglik(mu, data: DataSet) -> np.ndarray:
    """``sup_eta`` of the average log-likelihood at each ``mu``.

    Over the reduced form the constraint set at ``mu`` is
    ``{g11 <= mu, g10 <= 1 - mu}``; at most one of the two binds.
    """
    mu = np.asarray(mu, dtype=float)
    a, b, c = _freqs(data)
    out = np.full(mu.shape, entropy_value(np.array([a, b, c])))
    with np.errstate(divide="ignore", invalid="ignore"):
        hi = a > mu  # g11 = mu binds; remaining mass split between g10 and g00
        if np.any(hi):
            m = mu[hi]
            rest = b + c
            share = (1.0 - m) / rest if rest > 0 else np.zeros_like(m)
            g10, g00 = share * b, share * c
            out[hi] = loglik_from_probs(m, g10, g00, (a, b, c))
        lo = b > 1.0 - mu  # g10 = 1 - mu binds
        if np.any(lo):
            m = mu[lo]
            rest = a + c
            share = m / rest if rest > 0 else np.zeros_like(m)
            g11, g00 = share * a, share * c
            out[lo] = loglik_from_probs(g11, 1.0 - m, g00, (a, b, c))
    return out


def md_m_oracle(thetas):
    g11, g00 = reduced_form(np.atleast_2d(thetas))
    return g11, g11 + g00


def md_gmm_moments(theta, obs) -> np.ndarray:
    """Moment vector ``(1{d = 0} - g00, 1{(d, yd) = (1, 1)} - g11)`` for one record."""
    g11, g00 = reduced_form(np.asarray(theta, dtype=float))
    d, yd = obs
    return np.array([float(d == 0) - g00, float(d == 1 and yd == 1) - g11])


def _gmm_moments_batch(thetas, recs):
    g11, g00 = reduced_form(thetas)
    is00 = (recs[:, 0] == 0).astype(float)
    is11 = ((recs[:, 0] == 1) & (recs[:, 1] == 1)).astype(float)
    return np.stack([is00[None, :] - g00[:, None], is11[None, :] - g11[:, None]], axis=-1)


def cu_gmm_loglik(thetas, data: DataSet) -> np.ndarray:
    """CU-GMM criterion built on the three distinct records weighted by counts."""
    w = _freqs(data)
    g = _gmm_moments_batch(np.atleast_2d(thetas), RECORDS)
    rho = np.einsum("r,mrk->mk", w, g)
    dev = g - rho[:, None, :]
    S = np.einsum("r,mri,mrj->mij", w, dev, dev)
    W = pinv_psd_batch(S)
    return -0.5 * np.einsum("mi,mij,mj->m", rho, W, rho)


def resolve_eta2(dgp: dict, n: int) -> float:
    if dgp.get("eta2") is not None:
        return float(dgp["eta2"])
    return 1.0 - float(dgp.get("c", 0.0)) / np.sqrt(n)


def true_reduced_form(dgp: dict, n: int) -> tuple:
    mu, eta1 = float(dgp.get("mu", 0.5)), float(dgp.get("eta1", 0.5))
    eta2 = resolve_eta2(dgp, n)
    return md_reduced_form([mu, eta1, eta2])


def simulate_missing_data(dgp: dict, n: int, seed) -> DataSet:
    """``n`` records from the reduced form implied by ``dgp``.

    ``dgp`` holds ``mu``, ``eta1`` and either ``eta2`` or ``c`` (then
    ``eta2 = 1 - c / sqrt(n)``).
    """
    g11, g00 = true_reduced_form(dgp, n)
    rng = np.random.default_rng(seed)
    cell = rng.choice(3, size=n, p=np.clip([g11, 1.0 - g11 - g00, g00], 0.0, 1.0))
    return make_data(RECORDS[cell])


def md_identified_sets(g11: float, g00: float, n_points: int = 200) -> TrueSets:
    """Identified sets for reduced form ``(g11, g00)``.

    ``Theta_I`` is the segment ``eta2 = 1 - g00``, ``mu = g11 + eta1 g00``,
    ``eta1 in [0, 1]``; its discretization includes both end points.
    """
    if not (0.0 <= g11 <= 1.0 and 0.0 <= g00 <= 1.0 and g11 + g00 <= 1.0 + 1e-15):
        raise DomainError("reduced form must be a valid pair of cell probabilities")
    eta1 = np.linspace(0.0, 1.0, n_points)
    pts = np.column_stack([g11 + eta1 * g00, eta1, np.full(n_points, 1.0 - g00)])

    def pred(t):
        a, b = reduced_form(np.atleast_2d(t))
        return SPACE.contains(np.atleast_2d(t)) & (np.abs(a - g11) <= 1e-12) & (np.abs(b - g00) <= 1e-12)

    return TrueSets(pred, (g11, g11 + g00), pts)


def _truth(dgp: dict, n: int) -> TrueSets:
    g11, g00 = true_reduced_form(dgp, n)
    return md_identified_sets(g11, g00)


def _fit(data: DataSet, starts=None):
    f = _freqs(data)
    return entropy_value(f), fitted_theta(f)


def _fit_gmm(data: DataSet, starts=None):
    return 0.0, fitted_theta(_freqs(data))


def _loglik_fn(thetas, data):
    g11, g00 = reduced_form(thetas)
    return loglik_from_probs(g11, np.clip(1.0 - g11 - g00, 0.0, 1.0), g00, _freqs(data))


LOGLIK = Criterion(CriterionKind.LOG_LIKELIHOOD, _loglik_fn, SPACE, fit=_fit, profile=profile_loglik)
CU_GMM = Criterion(CriterionKind.CU_GMM, cu_gmm_loglik, SPACE, fit=_fit_gmm)

DEFAULT_DGP = {"mu": 0.5, "eta1": 0.5, "c": 1.0}


def missing_data_model(prior: str = "flat", criterion: str = "loglik") -> ModelSpec:
    crit = LOGLIK if criterion == "loglik" else CU_GMM
    pr = flat_prior(SPACE) if prior == "flat" else md_curved_prior(SPACE)
    name = "missing-data-cugmm" if criterion != "loglik" else f"missing-data-{prior}"
    return ModelSpec(
        name=name,
        space=SPACE,
        criterion=crit,
        prior=pr,
        sub=SUB,
        m_oracle=md_m_oracle,
        simulate=simulate_missing_data,
        truth=_truth,
        quasiconcave=True,
        smc_defaults={"K": 1, "L_blocks": 1},
        default_dgp=dict(DEFAULT_DGP),
    )


__all__ = [
    "CU_GMM",
    "LOGLIK",
    "SPACE",
    "cu_gmm_loglik",
    "entropy_value",
    "make_data",
    "md_gmm_moments",
    "md_identified_sets",
    "md_loglik",
    "md_m_oracle",
    "md_reduced_form",
    "missing_data_model",
    "profile_loglik",
    "simulate_missing_data",
]
