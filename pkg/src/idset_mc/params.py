"""Parameter spaces, priors and the box-to-real-line transform.

A parameter vector is a plain 1-d ``numpy`` array; batches of parameters are
2-d arrays of shape ``(m, dim)``.  All functions that take parameters accept
either form.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np
from scipy import special

from .stats import beta_logpdf


class BoundaryError(ValueError):
    """A coordinate sits on (or outside) the box boundary."""


def as_batch(theta) -> tuple[np.ndarray, bool]:
    """Return ``theta`` as a 2-d array and whether the input was a single point."""
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 1:
        return arr[None, :], True
    if arr.ndim != 2:
        raise ValueError(f"expected a 1-d or 2-d parameter array, got shape {arr.shape}")
    return arr, False


def _always(thetas: np.ndarray) -> np.ndarray:
    return np.ones(thetas.shape[0], dtype=bool)


@dataclass(frozen=True)
class ParamSpace:
    """Box ``[lower, upper]`` intersected with an optional constraint.

    ``constraint`` maps an ``(m, dim)`` array to a boolean ``(m,)`` array.  It
    is only consulted for points inside the box.
    """

    lower: np.ndarray
    upper: np.ndarray
    constraint: Callable[[np.ndarray], np.ndarray] = _always
    names: tuple = ()

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("lower and upper must be 1-d arrays of equal length")
        if np.any(lo > hi) or not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("need finite bounds with lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if not self.names:
            object.__setattr__(self, "names", tuple(f"theta_{i + 1}" for i in range(lo.size)))

    @property
    def dim(self) -> int:
        return self.lower.size

    def in_box(self, theta) -> np.ndarray:
        t, single = as_batch(theta)
        ok = np.all((t >= self.lower) & (t <= self.upper), axis=1) & np.all(np.isfinite(t), axis=1)
        return ok[0] if single else ok

    def contains(self, theta) -> np.ndarray:
        t, single = as_batch(theta)
        if t.shape[1] != self.dim:
            raise ValueError(f"parameter has dim {t.shape[1]}, space has dim {self.dim}")
        ok = self.in_box(t)
        if np.any(ok):
            ok[ok] = np.asarray(self.constraint(t[ok]), dtype=bool)
        return ok[0] if single else ok

    def uniform(self, rng: np.random.Generator, size: int, max_tries: int = 1000) -> np.ndarray:
        """Uniform draws on the feasible set by rejection from the box."""
        out = np.empty((0, self.dim))
        for _ in range(max_tries):
            cand = rng.uniform(self.lower, self.upper, size=(max(2 * size, 16), self.dim))
            out = np.vstack([out, cand[self.contains(cand)]])
            if out.shape[0] >= size:
                return out[:size]
        raise RuntimeError("rejection sampler could not find feasible points")


# -- transforms ------------------------------------------------------------


def to_unconstrained(theta, space: ParamSpace) -> np.ndarray:
    """Vectorized logit map from the box to R^d (boundary maps to +-inf)."""
    t = np.asarray(theta, dtype=float)
    u = (t - space.lower) / (space.upper - space.lower)
    with np.errstate(divide="ignore"):
        return special.logit(u)


def from_unconstrained(z, space: ParamSpace) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    return space.lower + (space.upper - space.lower) * special.expit(z)


def log_jacobian(z, space: ParamSpace) -> np.ndarray:
    """Log |d theta / d z| summed over coordinates (last axis)."""
    z = np.asarray(z, dtype=float)
    # log expit(z) + log expit(-z), both computed stably
    terms = -np.logaddexp(0.0, -z) - np.logaddexp(0.0, z)
    return np.sum(terms + np.log(space.upper - space.lower), axis=-1)


def transform_to_unconstrained(theta, space: ParamSpace) -> np.ndarray:
    """Map a point strictly inside the box to the real line coordinatewise.

    Raises :class:`BoundaryError` when any coordinate is on or outside the box.
    """
    t = np.asarray(theta, dtype=float)
    if np.any(t <= space.lower) or np.any(t >= space.upper):
        raise BoundaryError(f"{t!r} is not strictly inside the box")
    return to_unconstrained(t, space)


def transform_from_unconstrained(z, space: ParamSpace) -> np.ndarray:
    return from_unconstrained(z, space)


# -- priors ----------------------------------------------------------------


class PriorKind(str, Enum):
    FLAT = "flat"
    CURVED = "curved"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Prior:
    """Prior on a :class:`ParamSpace`.

    ``log_density`` takes an ``(m, dim)`` array and returns an ``(m,)`` array of
    (possibly unnormalized) log densities.  ``sampler(rng, size)`` draws from
    the prior.  Only density ratios matter to the sampler, so normalizing
    constants may be dropped.
    """

    kind: PriorKind
    space: ParamSpace
    log_density: Callable[[np.ndarray], np.ndarray]
    sampler: Callable[[np.random.Generator, int], np.ndarray]

    def logpdf(self, theta):
        t, single = as_batch(theta)
        out = np.full(t.shape[0], -np.inf)
        ok = self.space.contains(t)
        if np.any(ok):
            out[ok] = self.log_density(t[ok])
        return out[0] if single else out

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.sampler(rng, size)


def prior_log_density(prior: Prior, theta):
    """Log prior density, ``-inf`` off the feasible set."""
    t = np.asarray(theta, dtype=float)
    if t.shape[-1] != prior.space.dim:
        raise ValueError(f"parameter has dim {t.shape[-1]}, prior expects {prior.space.dim}")
    return prior.logpdf(t)


def flat_prior(space: ParamSpace) -> Prior:
    return Prior(
        PriorKind.FLAT,
        space,
        lambda t: np.zeros(t.shape[0]),
        lambda rng, size: space.uniform(rng, size),
    )


def md_curved_prior(space: ParamSpace) -> Prior:
    """Product prior for (mu, eta1, eta2) in the missing-data model.

    eta1 ~ Beta(3, 8), eta2 ~ Beta(8, 1) and mu given (eta1, eta2) uniform on
    [eta1 (1 - eta2), eta2 + eta1 (1 - eta2)].  Points with eta2 = 0 are
    rejected (the conditional uniform degenerates there).
    """

    def logpdf(t):
        mu, e1, e2 = t[:, 0], t[:, 1], t[:, 2]
        lo = e1 * (1.0 - e2)
        inside = (mu >= lo) & (mu <= lo + e2) & (e2 > 0.0)
        with np.errstate(divide="ignore"):
            val = beta_logpdf(e1, 3.0, 8.0) + beta_logpdf(e2, 8.0, 1.0) - np.log(e2)
        return np.where(inside, val, -np.inf)

    def sample(rng, size):
        e1 = rng.beta(3.0, 8.0, size)
        e2 = rng.beta(8.0, 1.0, size)
        lo = e1 * (1.0 - e2)
        mu = lo + e2 * rng.uniform(size=size)
        return np.column_stack([mu, e1, e2])

    return Prior(PriorKind.CURVED, space, logpdf, sample)


@dataclass(frozen=True)
class SubvectorMap:
    """Coordinates of the subvector of interest ``mu`` inside ``theta``."""

    indices: tuple
    dim: Optional[int] = None

    def __post_init__(self):
        idx = tuple(int(i) for i in np.atleast_1d(self.indices))
        if len(set(idx)) != len(idx):
            raise ValueError("subvector indices must be distinct")
        if self.dim is not None and any(i < 0 or i >= self.dim for i in idx):
            raise ValueError(f"subvector indices {idx} out of range for dim {self.dim}")
        object.__setattr__(self, "indices", idx)

    @property
    def scalar(self) -> bool:
        return len(self.indices) == 1

    def __call__(self, theta) -> np.ndarray:
        t = np.asarray(theta, dtype=float)
        sel = t[..., list(self.indices)]
        return sel[..., 0] if self.scalar else sel

    def nuisance(self, dim: int) -> tuple:
        return tuple(i for i in range(dim) if i not in self.indices)

    def combine(self, mu, eta, dim: int) -> np.ndarray:
        """Assemble full ``theta`` rows from ``mu`` (m,) or (m, k) and ``eta`` (m, dim-k)."""
        eta = np.atleast_2d(np.asarray(eta, dtype=float))
        mu = np.asarray(mu, dtype=float).reshape(eta.shape[0], -1)
        out = np.empty((eta.shape[0], dim))
        out[:, list(self.indices)] = mu
        out[:, list(self.nuisance(dim))] = eta
        return out


def subvector_bounds(space: ParamSpace, sub: SubvectorMap) -> tuple[float, float]:
    if not sub.scalar:
        raise ValueError("subvector bounds are defined for scalar subvectors only")
    i = sub.indices[0]
    return float(space.lower[i]), float(space.upper[i])


__all__ = [
    "BoundaryError",
    "ParamSpace",
    "Prior",
    "PriorKind",
    "SubvectorMap",
    "as_batch",
    "flat_prior",
    "from_unconstrained",
    "log_jacobian",
    "md_curved_prior",
    "prior_log_density",
    "subvector_bounds",
    "to_unconstrained",
    "transform_from_unconstrained",
    "transform_to_unconstrained",
]
