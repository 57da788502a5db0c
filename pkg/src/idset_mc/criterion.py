"""Sample criteria, their maximization, the QLR and profile criteria.

A criterion is vectorized: it maps an ``(m, dim)`` array of parameters to an
``(m,)`` array of average log-criterion values ``L_n(theta)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Mapping, Optional

import numpy as np
from scipy import optimize

from .params import ParamSpace, SubvectorMap, as_batch, from_unconstrained, to_unconstrained

QLR_TOL = 1e-6
# keep optimizer starting points this far inside the unit box (logit scale ~ 20)
_EDGE = 1e-9


class OptimizationError(RuntimeError):
    pass


class InfeasibleSliceError(ValueError):
    """No nuisance value makes ``(mu, eta)`` feasible."""


class CriterionKind(str, Enum):
    LOG_LIKELIHOOD = "loglik"
    OPTIMAL_GMM = "optimal-gmm"
    CU_GMM = "cu-gmm"


@dataclass(frozen=True)
class DataSet:
    """Observations plus cached sufficient statistics.

    ``rows`` is an ``(n, ...)`` array.  ``stats`` holds whatever summaries the
    owning model computed once at construction (cell counts, sample mean...).
    """

    rows: np.ndarray
    n: int
    stats: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a data set needs at least one observation")

    @classmethod
    def from_rows(cls, rows, stats=None) -> "DataSet":
        rows = np.asarray(rows)
        return cls(rows, int(rows.shape[0]), dict(stats or {}))


@dataclass(frozen=True)
class Criterion:
    """Average log-criterion ``L_n``.

    Parameters
    ----------
    kind : CriterionKind
    fn : callable
        ``fn(thetas, data) -> (m,)`` values.  Called only on feasible points.
    space : ParamSpace, optional
        If given, infeasible points evaluate to ``-inf`` without calling ``fn``.
    fit : callable, optional
        Closed-form maximizer ``fit(data) -> (l_hat, theta_hat)``.
    profile : callable, optional
        Closed-form profile ``profile(mu_values, data) -> sup_eta L_n(mu, eta)``.
    """

    kind: CriterionKind
    fn: Callable[[np.ndarray, DataSet], np.ndarray]
    space: Optional[ParamSpace] = None
    fit: Optional[Callable] = None
    profile: Optional[Callable] = None

    def eval(self, theta, data: DataSet):
        t, single = as_batch(theta)
        if self.space is None:
            out = np.asarray(self.fn(t, data), dtype=float)
        else:
            out = np.full(t.shape[0], -np.inf)
            ok = self.space.contains(t)
            if np.any(ok):
                out[ok] = self.fn(t[ok], data)
        out = np.where(np.isnan(out), -np.inf, out)
        return float(out[0]) if single else out

    __call__ = eval


@dataclass(frozen=True)
class QlrContext:
    l_hat: float
    theta_hat: np.ndarray
    n: int

    def refine(self, thetas, values) -> "QlrContext":
        """Raise ``l_hat`` to the best of ``values`` if it beats the stored maximum."""
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return self
        b = int(np.argmax(values))
        if values[b] > self.l_hat:
            return replace(self, l_hat=float(values[b]), theta_hat=np.array(thetas[b], dtype=float))
        return self


def _interior(theta, space: ParamSpace) -> np.ndarray:
    u = (np.asarray(theta, dtype=float) - space.lower) / (space.upper - space.lower)
    u = np.clip(u, _EDGE, 1.0 - _EDGE)
    return space.lower + (space.upper - space.lower) * u


def _nelder_mead(fun, z0, max_iter: int, fatol: float):
    res = optimize.minimize(
        fun,
        z0,
        method="Nelder-Mead",
        options={"maxiter": max_iter, "maxfev": 4 * max_iter, "xatol": np.inf, "fatol": fatol},
    )
    return res


def maximize_criterion(
    criterion: Criterion,
    space: ParamSpace,
    data: DataSet,
    seed: int,
    starts=None,
    n_uniform: int = 8,
    n_scan: int = 2000,
    max_iter: int = 4000,
    fatol: float = 1e-10,
    closed_form: bool = True,
) -> QlrContext:
    """Approximate ``sup_theta L_n(theta)``.

    Multistart Nelder-Mead in the logit coordinates of the box.  Starting
    points are ``starts`` (typically the best particles of an SMC run) plus
    the ``n_uniform`` best of ``n_scan`` uniform draws on the feasible set.
    A closed-form maximizer attached to the criterion takes precedence.
    """
    if closed_form and criterion.fit is not None:
        l_hat, theta_hat = criterion.fit(data)
        return QlrContext(float(l_hat), np.asarray(theta_hat, dtype=float), data.n)

    rng = np.random.default_rng(seed)
    cand = [space.uniform(rng, n_scan)]
    if starts is not None:
        cand.insert(0, np.atleast_2d(np.asarray(starts, dtype=float)))
    cand = np.vstack(cand)
    vals = criterion.eval(cand, data)
    n_given = 0 if starts is None else np.atleast_2d(starts).shape[0]
    scan_order = n_given + np.argsort(-vals[n_given:])[:n_uniform]
    init = np.r_[np.arange(n_given), scan_order]
    init = init[np.isfinite(vals[init])]
    if init.size == 0:
        raise OptimizationError("criterion is -inf at every starting point")

    best_val = float(np.max(vals))
    best_theta = cand[int(np.argmax(vals))].copy()

    def neg(z):
        nonlocal best_val, best_theta
        th = from_unconstrained(z, space)
        v = criterion.eval(th, data)
        if v > best_val:
            best_val, best_theta = v, th.copy()
        return -v if np.isfinite(v) else np.inf

    for i in init:
        _nelder_mead(neg, to_unconstrained(_interior(cand[i], space), space), max_iter, fatol)
    return QlrContext(best_val, best_theta, data.n)


def qlr(ctx: QlrContext, criterion: Criterion, theta, data: DataSet, tol: float = QLR_TOL):
    """``2n (l_hat - L_n(theta))``; tiny negatives from optimization error become 0."""
    vals = criterion.eval(theta, data)
    return qlr_from_values(ctx, vals, tol)


def qlr_from_values(ctx: QlrContext, values, tol: float = QLR_TOL):
    values = np.asarray(values, dtype=float)
    with np.errstate(invalid="ignore"):
        q = 2.0 * ctx.n * (ctx.l_hat - values)
    q = np.where(np.isneginf(values), np.inf, q)
    q = np.where((q < 0.0) & (q >= -tol), 0.0, q)
    return float(q) if q.ndim == 0 else q


def profile_criterion(
    criterion: Criterion,
    space: ParamSpace,
    sub: SubvectorMap,
    mu,
    data: DataSet,
    seed: int,
    starts=None,
    n_starts: int = 8,
    n_scan: int = 400,
    max_iter: int = 2000,
    fatol: float = 1e-10,
    closed_form: bool = True,
) -> float:
    """``sup_{eta in H_mu} L_n(mu, eta)`` for a single value of ``mu``.

    Derivative-free multistart search over the nuisance coordinates.  Starts
    are the nuisance parts of ``starts`` plus the best uniform draws of the
    nuisance box that are feasible at ``mu``.
    """
    mu_arr = np.atleast_1d(np.asarray(mu, dtype=float))
    if closed_form and criterion.profile is not None:
        return float(np.asarray(criterion.profile(mu_arr if not sub.scalar else mu_arr[0], data)))

    d = space.dim
    nuis = list(sub.nuisance(d))
    lo, hi = space.lower[nuis], space.upper[nuis]
    mu_lo, mu_hi = space.lower[list(sub.indices)], space.upper[list(sub.indices)]
    if np.any(mu_arr < mu_lo) or np.any(mu_arr > mu_hi):
        raise ValueError(f"mu={mu_arr} outside the subvector bounds")
    rng = np.random.default_rng(seed)
    eta = [rng.uniform(lo, hi, size=(n_scan, len(nuis)))]
    if starts is not None:
        eta.insert(0, np.atleast_2d(np.asarray(starts, dtype=float))[:, nuis])
    eta = np.vstack(eta)
    full = sub.combine(np.tile(mu_arr, (eta.shape[0], 1)), eta, d)
    vals = criterion.eval(full, data)
    feas = space.contains(full)
    if not np.any(feas):
        raise InfeasibleSliceError(f"no feasible nuisance value found at mu={mu_arr}")
    order = np.argsort(-np.where(feas, vals, -np.inf))[:n_starts]
    best = float(np.max(vals))
    if not nuis:
        return best

    nspace = ParamSpace(lo, hi)
    mu_row = mu_arr[None, :]

    def neg(z):
        nonlocal best
        e = from_unconstrained(z, nspace)
        v = criterion.eval(sub.combine(mu_row, e[None, :], d), data)[0]
        best = max(best, v)
        return -v if np.isfinite(v) else np.inf

    for i in order:
        if np.isfinite(vals[i]):
            _nelder_mead(neg, to_unconstrained(_interior(eta[i], nspace), nspace), max_iter, fatol)
    return best


# -- GMM ---------------------------------------------------------------------


def pinv_psd_batch(S: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    """Generalized inverses of a stack of symmetric PSD matrices.

    Eigenvalues below ``rcond`` times the largest eigenvalue of each matrix
    are treated as zero.
    """
    lam, vec = np.linalg.eigh(S)
    top = lam[..., -1:]
    keep = lam > rcond * np.maximum(top, 0.0)
    inv = np.where(keep, 1.0 / np.where(keep, lam, 1.0), 0.0)
    return np.einsum("...ik,...k,...jk->...ij", vec, inv, vec)


def cu_gmm_criterion(
    moments: Callable[[np.ndarray, np.ndarray], np.ndarray],
    data: DataSet,
    weights=None,
    space: Optional[ParamSpace] = None,
    rows=None,
    rcond: float = 1e-10,
) -> Criterion:
    """Continuously updated GMM criterion ``-0.5 rho' W(theta) rho``.

    ``moments(thetas, rows)`` returns an ``(m, r, k)`` array of per-record
    moment vectors.  ``rows`` defaults to ``data.rows``; pass the distinct
    records and their counts as ``weights`` to avoid repeating identical
    observations.  ``W(theta)`` is the generalized inverse of the centered
    second-moment matrix of the moments.
    """
    recs = data.rows if rows is None else np.asarray(rows)
    if weights is None:
        w = np.full(recs.shape[0], 1.0 / recs.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (recs.shape[0],):
            raise ValueError("weights must have one entry per record")
        w = w / w.sum()

    def fn(thetas, _data):
        g = np.asarray(moments(thetas, recs), dtype=float)
        if g.ndim != 3 or g.shape[:2] != (thetas.shape[0], recs.shape[0]):
            raise ValueError(f"moment array has shape {g.shape}, expected (m, {recs.shape[0]}, k)")
        rho = np.einsum("r,mrk->mk", w, g)
        dev = g - rho[:, None, :]
        S = np.einsum("r,mri,mrj->mij", w, dev, dev)
        W = pinv_psd_batch(S, rcond)
        return -0.5 * np.einsum("mi,mij,mj->m", rho, W, rho)

    return Criterion(CriterionKind.CU_GMM, fn, space)


__all__ = [
    "Criterion",
    "CriterionKind",
    "DataSet",
    "InfeasibleSliceError",
    "OptimizationError",
    "QLR_TOL",
    "QlrContext",
    "cu_gmm_criterion",
    "maximize_criterion",
    "pinv_psd_batch",
    "profile_criterion",
    "qlr",
    "qlr_from_values",
]
