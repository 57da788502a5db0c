"""Containers shared by the built-in models."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ..criterion import Criterion, DataSet, profile_criterion
from ..params import ParamSpace, Prior, SubvectorMap


@dataclass(frozen=True)
class TrueSets:
    """True identified sets for one data-generating process.

    ``theta_pred`` classifies ``(m, dim)`` arrays; ``theta_points`` is a finite
    discretization of the identified set that includes its extreme points;
    ``m_interval`` is the identified set of the scalar subvector.
    """

    theta_pred: Callable[[np.ndarray], np.ndarray]
    m_interval: tuple
    theta_points: np.ndarray


@dataclass(frozen=True)
class GameCellProbs:
    g00: np.ndarray
    g10: np.ndarray
    g01: np.ndarray
    g11: np.ndarray

    def as_array(self) -> np.ndarray:
        """Stack to ``(..., 4)`` in the cell order (00, 10, 01, 11)."""
        return np.stack([self.g00, self.g10, self.g01, self.g11], axis=-1)


@dataclass(frozen=True)
class ModelSpec:
    """A model ready for sampling and confidence-set construction.

    Attributes
    ----------
    m_oracle : callable
        ``m_oracle(thetas) -> (lo, hi)`` arrays: the equivalence set ``M(theta)``
        of the scalar subvector for every row.
    simulate : callable
        ``simulate(dgp, n, seed) -> DataSet``.
    truth : callable
        ``truth(dgp, n) -> TrueSets``.
    profile_batch : callable, optional
        ``profile_batch(mu_values, data, seed, starts) -> sup_eta L_n`` for an
        array of scalar ``mu`` values.  Falls back to the criterion's closed
        form, then to :func:`profile_criterion` one value at a time.
    quasiconcave : bool
        Whether the profile is known to be quasiconcave in ``mu``, so that the
        minimum over ``M(theta)`` sits at an endpoint.
    """

    name: str
    space: ParamSpace
    criterion: Criterion
    prior: Prior
    sub: SubvectorMap
    m_oracle: Callable
    simulate: Callable
    truth: Callable
    profile_batch: Optional[Callable] = None
    quasiconcave: bool = True
    smc_defaults: dict = field(default_factory=dict)
    default_dgp: dict = field(default_factory=dict)

    @property
    def mu_bounds(self) -> tuple:
        i = self.sub.indices[0]
        return float(self.space.lower[i]), float(self.space.upper[i])

    def profile(self, mu, data: DataSet, seed: int = 0, starts=None) -> np.ndarray:
        """``sup_eta L_n(mu, eta)`` for each entry of the array ``mu``."""
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        if self.profile_batch is not None:
            return np.asarray(self.profile_batch(mu, data, seed, starts), dtype=float)
        if self.criterion.profile is not None:
            return np.asarray(self.criterion.profile(mu, data), dtype=float)
        return np.array(
            [profile_criterion(self.criterion, self.space, self.sub, m, data, seed, starts=starts) for m in mu]
        )

    def with_prior(self, prior: Prior, name: Optional[str] = None) -> "ModelSpec":
        return replace(self, prior=prior, name=name or self.name)
