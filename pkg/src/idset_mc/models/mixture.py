"""Worst-case limit of the profile QLR when ``M_I`` is a nontrivial interval.

With two half-spaces whose polar cones are orthogonal, the limit
``max_i inf_{t in T_i} ||Z - t||^2`` equals ``max((X v 0)^2, (Y v 0)^2)`` for
``(X, Y)`` standard normal: zero with probability 1/4, a chi-square(1) with
probability 1/2 and the larger of two independent chi-square(1) variables
with probability 1/4.  Its CDF is therefore
``1/4 + F(w)/2 + F(w)^2/4`` with ``F`` the chi-square(1) CDF.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate, special

from ..stats import chisq_cdf


def _product_chisq1_cdf(w: float) -> float:
    # P(Z1^2 Z2^2 <= w) = P(|Z1 Z2| <= sqrt(w)); |Z1 Z2| has density 2 K0(u) / pi
    if w <= 0:
        return 0.0
    val, _ = integrate.quad(lambda u: special.k0(u), 0.0, np.sqrt(w), limit=200, epsabs=1e-12)
    return float(min(2.0 * val / np.pi, 1.0))


def worst_case_mixture_cdf(w, component: str = "max"):
    """CDF of the worst-case mixture at ``w``.

    Parameters
    ----------
    w : float or array
    component : {"max", "product"}
        Law of the last mixture component.  ``"max"`` (default) is the larger
        of two independent chi-square(1) variables, which is what the
        two-half-space construction produces.  ``"product"`` uses the product
        of two independent chi-square(1) variables, evaluated by 1-d
        quadrature; it is kept for comparison.
    """
    w_arr = np.asarray(w, dtype=float)
    f1 = np.where(w_arr >= 0, chisq_cdf(1, np.maximum(w_arr, 0.0)), 0.0)
    if component == "max":
        last = f1 * f1
    elif component == "product":
        last = np.vectorize(_product_chisq1_cdf, otypes=[float])(w_arr)
    else:
        raise ValueError(f"unknown component {component!r}")
    out = np.where(w_arr >= 0, 0.25 + 0.5 * f1 + 0.25 * last, 0.0)
    return float(out) if out.ndim == 0 else out


def simulate_worst_case(size: int, seed) -> np.ndarray:
    """Direct draws of ``max_i inf_{t in T_i} ||Z - t||^2`` with ``T_1 = {y <= 0}``, ``T_2 = {x <= 0}``."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((size, 2))
    # distance to {y <= 0} is (y v 0), to {x <= 0} is (x v 0)
    d = np.maximum(z, 0.0) ** 2
    return d.max(axis=1)


__all__ = ["simulate_worst_case", "worst_case_mixture_cdf"]
