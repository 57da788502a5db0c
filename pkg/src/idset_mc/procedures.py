"""Confidence sets built from quasi-posterior draws.

* Procedure 1: ``{theta : L_n(theta) >= zeta}`` with ``zeta`` the upper
  weighted ``alpha`` quantile of ``L_n`` over the draws, equivalently
  ``{Q_n <= xi}`` with ``xi`` the weighted ``alpha`` quantile of the QLR draws.
* Procedure 2: ``{mu : sup_eta L_n(mu, eta) >= zeta_p}`` with ``zeta_p`` the
  upper ``alpha`` quantile of ``PL_n(M(theta_b)) = inf_{mu in M(theta_b)}
  sup_eta L_n(mu, eta)``.
* Procedure 3: profile QLR below the chi-square(1) ``alpha`` quantile.
* Projection of the Procedure 1 set and percentile intervals for comparison.

Interval-valued sets are located by a grid scan followed by bisection on each
end point.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .criterion import Criterion, DataSet, QlrContext, qlr_from_values
from .params import SubvectorMap
from .smc import ParticleCloud, upper_weighted_quantile, weighted_quantile
from .stats import chisq_quantile


class CsKind(str, Enum):
    PROCEDURE1 = "procedure1"
    PROCEDURE2 = "procedure2"
    PROCEDURE3 = "procedure3"
    PROJECTION = "projection"
    PERCENTILE = "percentile"


def _check_level(alpha: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class FullCS:
    """Criterion contour ``{L_n >= zeta}``, equivalently ``{Q_n <= xi}``."""

    zeta: float
    xi: float
    level: float
    ctx: QlrContext
    criterion: Optional[Criterion] = None
    data: Optional[DataSet] = None

    def contains(self, theta):
        """Membership by the criterion cutoff."""
        return self.criterion.eval(theta, self.data) >= self.zeta

    membership = contains

    def contains_by_qlr(self, theta):
        return qlr_from_values(self.ctx, self.criterion.eval(theta, self.data)) <= self.xi

    def to_dict(self) -> dict:
        return {
            "kind": CsKind.PROCEDURE1.value,
            "level": self.level,
            "lo": None,
            "hi": None,
            "zeta": self.zeta,
            "xi": self.xi,
            "disconnected": False,
        }


@dataclass(frozen=True)
class IntervalCS:
    kind: CsKind
    level: float
    lo: float
    hi: float
    zeta: Optional[float] = None
    xi: Optional[float] = None
    disconnected: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("interval with lo > hi")

    def covers(self, lo: float, hi: float) -> bool:
        return self.lo <= lo and hi <= self.hi

    def to_dict(self) -> dict:
        return {
            "kind": CsKind(self.kind).value,
            "level": self.level,
            "lo": self.lo,
            "hi": self.hi,
            "zeta": self.zeta,
            "xi": self.xi,
            "disconnected": self.disconnected,
        }


@dataclass(frozen=True)
class ProfileCurve:
    """Profile criterion tabulated on a grid, linearly interpolated between nodes."""

    grid: np.ndarray
    values: np.ndarray

    @classmethod
    def build(cls, model, data: DataSet, n_grid: int = 201, seed: int = 0, starts=None) -> "ProfileCurve":
        lo, hi = model.mu_bounds
        grid = np.linspace(lo, hi, n_grid)
        return cls(grid, model.profile(grid, data, seed, starts))

    def __call__(self, mu):
        return np.interp(np.asarray(mu, dtype=float), self.grid, self.values)


def level_set_interval(
    profile: Callable[[np.ndarray], np.ndarray],
    cutoff: float,
    lower: float,
    upper: float,
    center: Optional[float] = None,
    grid: int = 1001,
    xtol: float = 1e-4,
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None,
):
    """Interval realization of ``{mu in [lower, upper] : profile(mu) >= cutoff}``.

    A ``grid``-point scan locates the set; each end point is then refined by
    bisection (using ``exact`` if given, else ``profile``) to ``xtol``.  When
    the scanned set has several runs the hull is returned with the
    ``disconnected`` flag set.

    Returns
    -------
    lo, hi : float
    disconnected : bool
    """
    exact = profile if exact is None else exact
    g = np.linspace(lower, upper, grid)
    inside = np.asarray(profile(g)) >= cutoff
    if center is not None and np.asarray(exact(np.array([center])))[0] >= cutoff:
        # make sure the run through the maximizer is present even if it falls between nodes
        j = int(np.clip(np.searchsorted(g, center), 0, grid - 1))
        g = np.insert(g, j, center)
        inside = np.insert(inside, j, True)
    idx = np.flatnonzero(inside)
    if idx.size == 0:
        c = float(center if center is not None else 0.5 * (lower + upper))
        return c, c, False
    first, last = idx[0], idx[-1]
    disconnected = bool(np.any(~inside[first : last + 1]))

    def refine(a_out, b_in):
        # a_out outside, b_in inside; returns a point inside within xtol of the boundary
        while abs(b_in - a_out) > xtol:
            m = 0.5 * (a_out + b_in)
            if np.asarray(exact(np.array([m])))[0] >= cutoff:
                b_in = m
            else:
                a_out = m
        return b_in

    lo = float(g[first]) if first == 0 else float(refine(g[first - 1], g[first]))
    hi = float(g[last]) if last == g.size - 1 else float(refine(g[last + 1], g[last]))
    return lo, hi, disconnected


def posterior_qlr_draws(cloud: ParticleCloud, ctx: QlrContext, criterion: Optional[Criterion] = None, data=None):
    """QLR at every particle (recomputed from ``criterion`` if given, else from the cloud)."""
    if criterion is not None:
        values = criterion.eval(cloud.thetas, data)
    else:
        values = cloud.log_crit / ctx.n
    return qlr_from_values(ctx, values)


def procedure1(cloud: ParticleCloud, ctx: QlrContext, alpha: float, criterion=None, data=None) -> FullCS:
    _check_level(alpha)
    values = cloud.log_crit / ctx.n
    zeta = upper_weighted_quantile(values, cloud.weights, alpha)
    xi = 2.0 * ctx.n * (ctx.l_hat - zeta)
    return FullCS(zeta, xi, alpha, ctx, criterion, data)


def equivalence_set_profile(model, thetas, data: DataSet, seed: int = 0, profile=None, n_interior: int = 21):
    """``PL_n(M(theta_b))`` for every row of ``thetas``.

    ``profile`` overrides ``model.profile`` (e.g. with a :class:`ProfileCurve`).
    For models whose profile is quasiconcave the minimum over ``M(theta_b)``
    is attained at an end point; otherwise ``n_interior`` points are scanned.
    """
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    prof = profile if profile is not None else (lambda mu: model.profile(mu, data, seed))
    lo, hi = model.m_oracle(th)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    if model.quasiconcave:
        return np.minimum(prof(lo), prof(hi))
    t = np.linspace(0.0, 1.0, n_interior)
    pts = lo[:, None] + (hi - lo)[:, None] * t[None, :]
    return prof(pts.ravel()).reshape(pts.shape).min(axis=1)


def _interval(kind, model, data, ctx, cutoff, alpha, seed, profile=None, **kw) -> IntervalCS:
    lower, upper = model.mu_bounds
    exact = lambda mu: model.profile(mu, data, seed)  # noqa: E731
    scan = profile if profile is not None else exact
    center = float(model.sub(ctx.theta_hat))
    lo, hi, disc = level_set_interval(scan, cutoff, lower, upper, center=center, exact=exact, **kw)
    return IntervalCS(kind, alpha, lo, hi, zeta=cutoff, xi=2.0 * ctx.n * (ctx.l_hat - cutoff), disconnected=disc)


def _require_scalar(model):
    if not model.sub.scalar:
        raise ValueError("interval confidence sets need a scalar subvector")


def procedure2(cloud: ParticleCloud, ctx: QlrContext, model, alpha: float, data: DataSet, seed: int = 0,
               profile=None, pl_values=None, **kw) -> IntervalCS:
    """Profile-criterion cutoff calibrated by ``PL_n(M(theta_b))`` over the draws.

    ``pl_values`` may carry precomputed ``PL_n(M(theta_b))`` values (they do
    not depend on ``alpha``).
    """
    _check_level(alpha)
    _require_scalar(model)
    if pl_values is None:
        pl_values = equivalence_set_profile(model, cloud.thetas, data, seed, profile)
    zeta = upper_weighted_quantile(pl_values, cloud.weights, alpha)
    return _interval(CsKind.PROCEDURE2, model, data, ctx, zeta, alpha, seed, profile, **kw)


def procedure3(ctx: QlrContext, model, alpha: float, data: DataSet, seed: int = 0, profile=None, **kw) -> IntervalCS:
    """``{mu : inf_eta Q_n(mu, eta) <= chi2_{1, alpha}}``."""
    _check_level(alpha)
    _require_scalar(model)
    cutoff = ctx.l_hat - chisq_quantile(1, alpha) / (2.0 * ctx.n)
    return _interval(CsKind.PROCEDURE3, model, data, ctx, cutoff, alpha, seed, profile, **kw)


def projection_cs(full: FullCS, model, data: DataSet, seed: int = 0, profile=None, **kw) -> IntervalCS:
    """Projection of the Procedure 1 set: ``{mu : sup_eta L_n(mu, eta) >= zeta}``."""
    _require_scalar(model)
    return _interval(CsKind.PROJECTION, model, data, full.ctx, full.zeta, full.level, seed, profile, **kw)


def percentile_cs(cloud: ParticleCloud, sub: SubvectorMap, alpha: float) -> IntervalCS:
    """Equal-tailed weighted percentile interval of the ``mu`` draws."""
    _check_level(alpha)
    if not sub.scalar:
        raise ValueError("percentile intervals need a scalar subvector")
    mu = sub(cloud.thetas)
    tail = 0.5 * (1.0 - alpha)
    lo = weighted_quantile(mu, cloud.weights, tail)
    hi = weighted_quantile(mu, cloud.weights, 1.0 - tail)
    return IntervalCS(CsKind.PERCENTILE, alpha, lo, hi)


__all__ = [
    "CsKind",
    "FullCS",
    "IntervalCS",
    "ProfileCurve",
    "equivalence_set_profile",
    "level_set_interval",
    "percentile_cs",
    "posterior_qlr_draws",
    "procedure1",
    "procedure2",
    "procedure3",
    "projection_cs",
]
