"""Distribution helpers used by the procedures and the acceptance checks.

Everything here works on scalars or numpy arrays.  The heavy lifting is
delegated to ``scipy.special`` (error function, incomplete gamma, log-beta);
this module only fixes conventions (mean-one weights, weighted CDFs, the
quantile definition) and domain checks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, special


class DomainError(ValueError):
    """Argument outside the domain of a distribution function."""


def normal_cdf(x):
    """Standard normal CDF (complementary-error-function based, tail stable)."""
    return special.ndtr(x)


def normal_inv(p):
    """Standard normal quantile function; ``p`` must lie in (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0.0) | (p_arr >= 1.0)) or np.any(np.isnan(p_arr)):
        raise DomainError(f"normal_inv needs p in (0, 1), got {p!r}")
    out = special.ndtri(p_arr)
    return float(out) if out.ndim == 0 else out


def chisq_cdf(df, x):
    x = np.asarray(x, dtype=float)
    out = special.gammainc(df / 2.0, np.maximum(x, 0.0) / 2.0)
    return float(out) if out.ndim == 0 else out


def chisq_quantile(df: int, alpha: float) -> float:
    """``alpha`` quantile of the chi-square distribution with ``df`` degrees.

    Solved by bracketed root finding on the regularized lower incomplete gamma
    function, relative accuracy about 1e-12.
    """
    if df < 1:
        raise DomainError(f"df must be >= 1, got {df}")
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    a = df / 2.0
    hi = max(1.0, 2.0 * df)
    while special.gammainc(a, hi / 2.0) < alpha:
        hi *= 2.0
    return optimize.brentq(
        lambda x: special.gammainc(a, x / 2.0) - alpha, 0.0, hi, xtol=1e-300, rtol=1e-13
    )


def gamma_cdf(shape: float, scale: float, x):
    if shape <= 0 or scale <= 0:
        raise DomainError("gamma shape and scale must be positive")
    x = np.asarray(x, dtype=float)
    out = special.gammainc(shape, np.maximum(x, 0.0) / scale)
    return float(out) if out.ndim == 0 else out


def beta_logpdf(x, a: float, b: float):
    """Log Beta(a, b) density; ``-inf`` outside [0, 1]."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = special.xlogy(a - 1.0, x) + special.xlog1py(b - 1.0, -x) - special.betaln(a, b)
    out = np.where((x >= 0.0) & (x <= 1.0), out, -np.inf)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class EmpiricalDist:
    """Weighted sample with weights normalized to mean one, sorted ascending."""

    values: np.ndarray
    weights: np.ndarray

    @classmethod
    def from_sample(cls, values, weights=None) -> "EmpiricalDist":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            raise ValueError("empty sample")
        if weights is None:
            weights = np.ones_like(values)
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape != values.shape:
            raise ValueError("values and weights differ in length")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        order = np.argsort(values, kind="stable")
        w = weights[order]
        return cls(values[order], w * (w.size / w.sum()))

    def cdf(self, z):
        """Weighted empirical CDF ``(1/B) sum_b w_b 1{x_b <= z}``."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)]) / self.values.size
        idx = np.searchsorted(self.values, z, side="right")
        return cum[idx]


def weighted_cdf_steps(values, weights):
    """Sorted unique support points and the weighted CDF evaluated there."""
    dist = EmpiricalDist.from_sample(values, weights)
    cum = np.cumsum(dist.weights) / dist.values.size
    # keep the last index of each run of ties
    last = np.r_[dist.values[1:] != dist.values[:-1], True]
    return dist.values[last], np.minimum(cum[last], 1.0)


def ks_distance(sample, cdf: Callable, weights=None) -> float:
    """Kolmogorov-Smirnov distance between a (weighted) sample and a CDF.

    ``sample`` may be an :class:`EmpiricalDist` or raw values.  The sup is
    taken over both one-sided limits at every support point.
    """
    if isinstance(sample, EmpiricalDist):
        dist = sample
    else:
        dist = EmpiricalDist.from_sample(sample, weights)
    x, upper = weighted_cdf_steps(dist.values, dist.weights)
    lower = np.r_[0.0, upper[:-1]]
    f = np.asarray(cdf(x), dtype=float)
    return float(max(np.max(np.abs(upper - f)), np.max(np.abs(lower - f))))


def gamma_quantile(shape: float, scale: float, alpha):
    if shape <= 0 or scale <= 0:
        raise DomainError("gamma shape and scale must be positive")
    a = np.asarray(alpha, dtype=float)
    if np.any((a <= 0.0) | (a >= 1.0)):
        raise DomainError("alpha must lie in (0, 1)")
    out = scale * special.gammaincinv(shape, a)
    return float(out) if out.ndim == 0 else out
