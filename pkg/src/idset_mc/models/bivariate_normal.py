"""Vectorized bivariate normal orthant probabilities.

Implements Genz's (2004) BVNU reduction: Gauss-Legendre quadrature of the
Plackett/Drezner integral in ``asin(r)`` for moderate correlation and the
Drezner-Wesolowsky expansion with a correction integral for ``|r| >= 0.925``.
Absolute accuracy is about 1e-15 for the 20-point rule.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..stats import DomainError

_W6 = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_X6 = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_W12 = np.array(
    [0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
     0.2031674267230659, 0.2334925365383547, 0.2491470458134029]
)
_X12 = np.array(
    [0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
     0.5873179542866171, 0.3678314989981802, 0.1252334085114692]
)
_W20 = np.array(
    [0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
     0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
     0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
     0.1527533871307259]
)
_X20 = np.array(
    [0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
     0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
     0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
     0.07652652113349733]
)


def _rule(w, x):
    # nodes mapped to (0, 2) so that asr * x covers (0, 2 asr)
    return np.r_[w, w], np.r_[1.0 - x, 1.0 + x]


_RULES = [_rule(_W6, _X6), _rule(_W12, _X12), _rule(_W20, _X20)]
_TWO_PI = 2.0 * np.pi


def _moderate(h, k, r, rule):
    w, x = rule
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = 0.5 * np.arcsin(r)
    sn = np.sin(asr[:, None] * x[None, :])
    val = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ w
    return val * asr / _TWO_PI + special.ndtr(-h) * special.ndtr(-k)


def _high(h, k, r):
    w, x = _RULES[2]
    neg = r < 0
    k = np.where(neg, -k, k)
    hk = h * k
    bvn = np.zeros_like(h)
    lt1 = np.abs(r) < 1.0
    if np.any(lt1):
        hh, kk, hkk, rr = h[lt1], k[lt1], hk[lt1], r[lt1]
        a_s = 1.0 - rr * rr
        a = np.sqrt(a_s)
        bs = (hh - kk) ** 2
        asr = -0.5 * (bs / a_s + hkk)
        c = (4.0 - hkk) / 8.0
        d = (12.0 - hkk) / 80.0
        part = np.where(
            asr > -100.0,
            a * np.exp(asr) * (1.0 - c * (bs - a_s) * (1.0 - d * bs) / 3.0 + c * d * a_s * a_s),
            0.0,
        )
        b = np.sqrt(bs)
        sp = np.sqrt(_TWO_PI) * special.ndtr(-b / a)
        part = part - np.where(
            hkk > -100.0, np.exp(-0.5 * hkk) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0), 0.0
        )
        a = 0.5 * a
        xs = (a[:, None] * x[None, :]) ** 2
        asr2 = -0.5 * (bs[:, None] / xs + hkk[:, None])
        keep = asr2 > -100.0
        sp2 = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
        rs = np.sqrt(1.0 - xs)
        ep = np.exp(-0.5 * hkk[:, None] * xs / (1.0 + rs) ** 2) / rs
        terms = np.where(keep, np.exp(np.where(keep, asr2, 0.0)) * (sp2 - ep), 0.0)
        part = (a * (terms @ w) - part) / _TWO_PI
        bvn[lt1] = part
    pos = r > 0
    out = np.where(pos, bvn + special.ndtr(-np.maximum(h, k)), 0.0)
    lower = np.where(h < 0, special.ndtr(k) - special.ndtr(h), special.ndtr(-h) - special.ndtr(-k))
    out = np.where(~pos & (h >= k), -bvn, out)
    out = np.where(~pos & (h < k), lower - bvn, out)
    return out


def bvn_upper(h, k, r):
    """``P(X > h, Y > k)`` for standard bivariate normal with correlation ``r``.

    Accepts broadcastable arrays; ``|r| <= 1`` (``r = +-1`` handled as limits).
    Infinite limits are allowed.
    """
    h, k, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (h, k, r)))
    shape = h.shape
    h, k, r = h.ravel().copy(), k.ravel().copy(), r.ravel().copy()
    out = np.empty(h.size)

    # infinite limits reduce to marginals
    inf_case = ~(np.isfinite(h) & np.isfinite(k))
    if np.any(inf_case):
        hi, ki = h[inf_case], k[inf_case]
        res = np.where(
            (hi == np.inf) | (ki == np.inf),
            0.0,
            np.where(hi == -np.inf, np.where(ki == -np.inf, 1.0, special.ndtr(-ki)), special.ndtr(-hi)),
        )
        out[inf_case] = res
    fin = ~inf_case
    ar = np.abs(r)
    groups = [
        fin & (ar < 0.3),
        fin & (ar >= 0.3) & (ar < 0.75),
        fin & (ar >= 0.75) & (ar < 0.925),
    ]
    for g, rule in zip(groups, _RULES):
        if np.any(g):
            out[g] = _moderate(h[g], k[g], r[g], rule)
    g = fin & (ar >= 0.925)
    if np.any(g):
        out[g] = _high(h[g], k[g], r[g])
    return np.clip(out, 0.0, 1.0).reshape(shape)


def bvn_lower(a, b, r):
    """``P(X <= a, Y <= b)`` without argument checks (``|r| <= 1``)."""
    return bvn_upper(-np.asarray(a, dtype=float), -np.asarray(b, dtype=float), r)


def bvn_cdf(a, b, rho):
    """Standard bivariate normal CDF ``P(Z1 <= a, Z2 <= b)`` with correlation ``rho``.

    Raises :class:`~idset_mc.stats.DomainError` unless ``|rho| < 1``.
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(~(np.abs(rho_arr) < 1.0)):
        raise DomainError(f"bvn_cdf needs |rho| < 1, got {rho!r}")
    out = bvn_lower(a, b, rho_arr)
    return float(out) if out.ndim == 0 else out


__all__ = ["bvn_cdf", "bvn_lower", "bvn_upper"]
