"""Adaptive tempered Sequential Monte Carlo for quasi-posteriors.

The sampler bridges the prior (``phi = 0``) and the quasi-posterior
``exp(n L_n(theta)) pi(theta)`` (``phi = 1``) through the schedule
``phi_j = ((j - 1) / (J - 1)) ** lam``.  Each stage reweights (correction),
resamples when the effective sample size drops to ``ess_threshold_frac * B``
(selection) and moves every particle with ``K`` random-walk Metropolis-Hastings
steps in logit coordinates (mutation).  The proposal scale follows a logistic
feedback rule on the previous acceptance rate.

All per-particle work is vectorized across the cloud; randomness for stage
``j`` comes from ``SeedSequence([seed, j])`` so that a run is reproducible bit
for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy import special

from .params import ParamSpace, Prior, from_unconstrained, log_jacobian, to_unconstrained


class ConfigError(ValueError):
    pass


class DegeneracyError(RuntimeError):
    """Every particle has zero incremental weight."""


@dataclass(frozen=True)
class SmcConfig:
    B: int = 10000
    J: int = 200
    K: int = 1
    lam: float = 2.0
    L_blocks: int = 1
    target_accept: float = 0.35
    ess_threshold_frac: float = 0.5
    seed: int = 0
    sigma_init: float = 1.0

    def __post_init__(self):
        problems = []
        if self.B < 2:
            problems.append("B must be >= 2")
        if self.J < 2:
            problems.append("J must be >= 2")
        if self.K < 1:
            problems.append("K must be >= 1")
        if self.L_blocks < 1:
            problems.append("L_blocks must be >= 1")
        if not self.lam > 0:
            problems.append("lam must be positive")
        if not 0 < self.ess_threshold_frac < 1:
            problems.append("ess_threshold_frac must lie in (0, 1)")
        if not 0 < self.target_accept < 1:
            problems.append("target_accept must lie in (0, 1)")
        if not self.sigma_init > 0:
            problems.append("sigma_init must be positive")
        if not 0 <= int(self.seed) < 2**64:
            problems.append("seed must be a 64-bit unsigned integer")
        if problems:
            raise ConfigError("; ".join(problems))


@dataclass(frozen=True)
class ParticleCloud:
    """SMC state.

    ``log_crit`` holds ``n L_n(theta_b)``; ``z`` the logit coordinates of
    ``thetas``.  Weights are normalized to mean one.
    """

    thetas: np.ndarray
    z: np.ndarray
    weights: np.ndarray
    log_crit: np.ndarray
    log_prior: np.ndarray
    stage: int = 1
    phi: float = 0.0
    sigma: float = 1.0
    accept_rate: float = float("nan")
    log_evidence: float = 0.0
    diagnostics: tuple = field(default=(), compare=False)

    @property
    def B(self) -> int:
        return self.weights.size


def tempering_schedule(J: int, lam: float = 2.0) -> np.ndarray:
    if J < 2:
        raise ConfigError("J must be >= 2")
    if not lam > 0:
        raise ConfigError("lam must be positive")
    return (np.arange(J) / (J - 1.0)) ** lam


def normalize_weights(w: np.ndarray) -> np.ndarray:
    return w * (w.size / np.sum(w))


def correction_step(cloud: ParticleCloud, phi_prev: float, phi_next: float) -> ParticleCloud:
    """Reweight by ``exp((phi_next - phi_prev) n L_n)`` computed in log space."""
    if not phi_next >= phi_prev:
        raise ValueError("tempering must move forward")
    dphi = phi_next - phi_prev
    with np.errstate(divide="ignore", invalid="ignore"):
        log_v = np.where(np.isneginf(cloud.log_crit), -np.inf if dphi > 0 else 0.0, dphi * cloud.log_crit)
        log_w = np.log(cloud.weights) + log_v
    top = np.max(log_w)
    if not np.isfinite(top):
        raise DegeneracyError(f"all incremental weights vanish at phi={phi_next:g}")
    w = np.exp(log_w - top)
    # log of (1/B) sum_b w_{j-1} v_j, the normalizing-constant increment
    inc = top + np.log(np.mean(w))
    return replace(cloud, weights=normalize_weights(w), phi=phi_next, log_evidence=cloud.log_evidence + inc)


def ess(cloud_or_weights) -> float:
    w = cloud_or_weights.weights if isinstance(cloud_or_weights, ParticleCloud) else np.asarray(cloud_or_weights)
    return float(w.size / np.mean(w * w))


def selection_step(cloud: ParticleCloud, rng: np.random.Generator) -> ParticleCloud:
    """Multinomial resampling; weights reset to one."""
    p = cloud.weights / np.sum(cloud.weights)
    idx = rng.choice(cloud.B, size=cloud.B, replace=True, p=p)
    return replace(
        cloud,
        thetas=cloud.thetas[idx],
        z=cloud.z[idx],
        log_crit=cloud.log_crit[idx],
        log_prior=cloud.log_prior[idx],
        weights=np.ones(cloud.B),
    )


def adapt_scale(sigma_prev: float, accept_prev: float, target: float = 0.35) -> float:
    return sigma_prev * (0.95 + 0.10 * special.expit(16.0 * (accept_prev - target)))


def weighted_cov(z: np.ndarray, weights: np.ndarray, ridge: float = 1e-8) -> np.ndarray:
    """Weighted covariance plus ``ridge * trace / d`` on the diagonal."""
    w = weights / np.sum(weights)
    finite = np.all(np.isfinite(z), axis=1)
    if not np.all(finite):
        z, w = z[finite], w[finite] / np.sum(w[finite])
    mean = w @ z
    dev = z - mean
    cov = (dev * w[:, None]).T @ dev
    d = cov.shape[0]
    tr = np.trace(cov)
    cov = cov + (ridge * tr / d if tr > 0 else ridge) * np.eye(d)
    return cov


def _log_target(phi, log_crit, log_prior, z, space):
    with np.errstate(invalid="ignore"):
        return phi * log_crit + log_prior + log_jacobian(z, space)


def mutation_step(
    cloud: ParticleCloud,
    phi: float,
    K: int,
    L_blocks: int,
    log_crit_fn: Callable[[np.ndarray], np.ndarray],
    prior: Prior,
    space: ParamSpace,
    rng: np.random.Generator,
    sigma: Optional[float] = None,
) -> ParticleCloud:
    """``K`` random-walk Metropolis-Hastings sweeps per particle.

    Targets ``exp(phi * n L_n) pi`` expressed in logit coordinates (so the
    log-Jacobian of the inverse transform enters the target).  With one block
    the proposal is ``N(0, sigma^2 I)``; with ``L_blocks > 1`` coordinates are
    split into random blocks updated in turn, each with proposal covariance
    ``sigma^2`` times the matching sub-matrix of the particle covariance.

    ``log_crit_fn`` maps an ``(m, d)`` array to ``n L_n`` values.
    """
    sigma = cloud.sigma if sigma is None else sigma
    B, d = cloud.thetas.shape
    z = cloud.z.copy()
    thetas = cloud.thetas.copy()
    log_crit = cloud.log_crit.copy()
    log_prior = cloud.log_prior.copy()
    cur = _log_target(phi, log_crit, log_prior, z, space)

    if L_blocks == 1:
        blocks = [np.arange(d)]
        chols = [np.eye(d)]
    else:
        labels = rng.integers(L_blocks, size=d)
        blocks = [np.flatnonzero(labels == l) for l in range(L_blocks)]
        blocks = [b for b in blocks if b.size]
        cov = weighted_cov(z, cloud.weights)
        chols = [np.linalg.cholesky(cov[np.ix_(b, b)]) for b in blocks]

    accepted = 0
    proposed = 0
    for _ in range(K):
        for blk, chol in zip(blocks, chols):
            prop_z = z.copy()
            prop_z[:, blk] += sigma * rng.standard_normal((B, blk.size)) @ chol.T
            prop_t = from_unconstrained(prop_z, space)
            lp = prior.logpdf(prop_t)
            lc = np.full(B, -np.inf)
            ok = np.isfinite(lp)
            if np.any(ok):
                lc[ok] = log_crit_fn(prop_t[ok])
            new = _log_target(phi, lc, lp, prop_z, space)
            log_u = np.log(rng.uniform(size=B))
            with np.errstate(invalid="ignore"):
                acc = log_u < new - cur
            acc &= np.isfinite(new)
            z[acc] = prop_z[acc]
            thetas[acc] = prop_t[acc]
            log_crit[acc] = lc[acc]
            log_prior[acc] = lp[acc]
            cur[acc] = new[acc]
            accepted += int(np.count_nonzero(acc))
            proposed += B
    return replace(
        cloud,
        thetas=thetas,
        z=z,
        log_crit=log_crit,
        log_prior=log_prior,
        sigma=sigma,
        accept_rate=accepted / proposed,
    )


def _stage_rng(seed: int, stage: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(stage)]))


def initial_cloud(prior: Prior, space: ParamSpace, log_crit_fn, B: int, rng, sigma: float = 1.0) -> ParticleCloud:
    thetas = np.asarray(prior.sample(rng, B), dtype=float)
    z = to_unconstrained(thetas, space)
    lp = prior.logpdf(thetas)
    lc = np.full(B, -np.inf)
    ok = np.isfinite(lp)
    lc[ok] = log_crit_fn(thetas[ok])
    return ParticleCloud(thetas, z, np.ones(B), lc, lp, stage=1, phi=0.0, sigma=sigma)


def run_smc(model, data, config: SmcConfig, on_stage: Optional[Callable[[dict], None]] = None) -> ParticleCloud:
    """Draw from the quasi-posterior of ``model`` given ``data``.

    ``model`` needs ``criterion``, ``prior`` and ``space`` attributes (a
    :class:`~idset_mc.models.base.ModelSpec` qualifies).  ``on_stage`` receives
    one diagnostics dict per stage.

    Returns
    -------
    ParticleCloud
        Cloud at ``phi = 1`` with mean-one weights; ``diagnostics`` holds the
        per-stage rows (stage, phi, ess, sigma, accept_rate, logZ_increment).
    """
    n = data.n
    crit = model.criterion

    def log_crit_fn(t):
        return n * crit.eval(t, data)

    phis = tempering_schedule(config.J, config.lam)
    cloud = initial_cloud(model.prior, model.space, log_crit_fn, config.B, _stage_rng(config.seed, 1), config.sigma_init)
    rows = []
    sigma = config.sigma_init
    for j in range(2, config.J + 1):
        rng = _stage_rng(config.seed, j)
        before = cloud.log_evidence
        cloud = correction_step(cloud, phis[j - 2], phis[j - 1])
        e = ess(cloud)
        if e <= config.ess_threshold_frac * config.B:
            cloud = selection_step(cloud, rng)
        if j > 2:
            sigma = adapt_scale(sigma, cloud.accept_rate, config.target_accept)
        cloud = mutation_step(
            cloud, phis[j - 1], config.K, config.L_blocks, log_crit_fn, model.prior, model.space, rng, sigma
        )
        cloud = replace(cloud, stage=j)
        row = {
            "stage": j,
            "phi": float(phis[j - 1]),
            "ess": e,
            "sigma": sigma,
            "accept_rate": cloud.accept_rate,
            "logZ_increment": cloud.log_evidence - before,
        }
        rows.append(row)
        if on_stage is not None:
            on_stage(row)
    return replace(cloud, diagnostics=tuple(rows))


def weighted_quantile(values, weights, alpha: float) -> float:
    """Smallest sample value whose weighted CDF is at least ``alpha``."""
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if values.size == 0:
        raise ValueError("weighted_quantile needs at least one value")
    if values.shape != weights.shape:
        raise ValueError("values and weights differ in length")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    order = np.argsort(values, kind="stable")
    cum = np.cumsum(weights[order])
    cum /= cum[-1]
    k = int(np.searchsorted(cum, alpha - 1e-12, side="left"))
    return float(values[order][min(k, values.size - 1)])


def upper_weighted_quantile(values, weights, alpha: float) -> float:
    """Largest sample value ``z`` with weighted mass of ``{values >= z}`` at least ``alpha``."""
    return -weighted_quantile(-np.asarray(values, dtype=float), weights, alpha)


__all__ = [
    "ConfigError",
    "DegeneracyError",
    "ParticleCloud",
    "SmcConfig",
    "adapt_scale",
    "correction_step",
    "ess",
    "initial_cloud",
    "mutation_step",
    "normalize_weights",
    "run_smc",
    "selection_step",
    "tempering_schedule",
    "upper_weighted_quantile",
    "weighted_cov",
    "weighted_quantile",
]
