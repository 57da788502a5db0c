"""Monte Carlo coverage studies.

Each replication simulates a data set, runs the sampler, builds the requested
confidence sets at every level and records whether each set covers the true
identified set.  Replication ``r`` for sample size ``n`` and DGP number ``k``
draws all of its randomness from ``SeedSequence([base_seed, n, k, r])``, so
results do not depend on the order or process in which replications run.
"""

from __future__ import annotations

import csv
import json
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .criterion import maximize_criterion
from .models import get_model
from .procedures import (
    CsKind,
    ProfileCurve,
    equivalence_set_profile,
    percentile_cs,
    posterior_qlr_draws,
    procedure1,
    procedure2,
    procedure3,
    projection_cs,
)
from .smc import DegeneracyError, ParticleCloud, SmcConfig, run_smc, weighted_quantile
from .stats import chisq_quantile, gamma_quantile

ALL_PROCEDURES = tuple(k.value for k in CsKind)
TABLE_COLUMNS = ("procedure", "n", "level", "dgp", "coverage", "mcse", "mean_lo", "mean_hi", "excluded")


@dataclass(frozen=True)
class StudyConfig:
    model: str = "missing-data-flat"
    model_options: dict = field(default_factory=dict)
    dgps: tuple = ()
    ns: tuple = (1000,)
    levels: tuple = (0.90, 0.95, 0.99)
    R: int = 500
    smc: dict = field(default_factory=dict)
    procedures: tuple = ALL_PROCEDURES
    base_seed: int = 0
    n_top_starts: int = 8

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("R must be >= 1")
        if not all(0.0 < a < 1.0 for a in self.levels):
            raise ValueError("levels must lie in (0, 1)")
        bad = [p for p in self.procedures if p not in ALL_PROCEDURES]
        if bad:
            raise ValueError(f"unknown procedures {bad}; choose from {ALL_PROCEDURES}")
        object.__setattr__(self, "ns", tuple(int(n) for n in self.ns))
        object.__setattr__(self, "levels", tuple(float(a) for a in self.levels))
        object.__setattr__(self, "procedures", tuple(self.procedures))
        object.__setattr__(self, "dgps", tuple(dict(d) for d in self.dgps))

    def resolved_dgps(self, model) -> list:
        dgps = list(self.dgps) or [dict(model.default_dgp)]
        return [dict(d) for d in dgps]

    def smc_config(self, model, seed: int) -> SmcConfig:
        opts = dict(model.smc_defaults)
        opts.update(self.smc)
        opts["seed"] = seed
        return SmcConfig(**opts)


def dgp_label(dgp: dict) -> str:
    if "label" in dgp:
        return str(dgp["label"])
    return ",".join(f"{k}={v}" for k, v in sorted(dgp.items()))


def _seeds(config: StudyConfig, n: int, k: int, rep: int):
    ss = np.random.SeedSequence([int(config.base_seed), int(n), int(k), int(rep)])
    data_ss, smc_ss, opt_ss = ss.spawn(3)
    return (
        data_ss,
        int(smc_ss.generate_state(1, dtype=np.uint64)[0]),
        int(opt_ss.generate_state(1, dtype=np.uint32)[0]),
    )


def fit_context(model, data, cloud: ParticleCloud, seed: int, n_top: int = 8):
    """Maximizer started from the best particles, then raised to the best particle if higher."""
    top = cloud.thetas[np.argsort(-cloud.log_crit)[:n_top]]
    ctx = maximize_criterion(model.criterion, model.space, data, seed, starts=top)
    return ctx.refine(cloud.thetas, cloud.log_crit / data.n)


def build_sets(model, data, cloud, ctx, levels, procedures, seed: int = 0) -> dict:
    """All requested confidence sets keyed by ``(procedure, level)``."""
    out = {}
    profile = None
    interval_procs = {"procedure2", "procedure3", "projection"} & set(procedures)
    if interval_procs and model.profile_batch is not None:
        top = cloud.thetas[np.argsort(-cloud.log_crit)[:8]]
        profile = ProfileCurve.build(model, data, seed=seed, starts=top)
    pl = None
    if "procedure2" in procedures:
        pl = equivalence_set_profile(model, cloud.thetas, data, seed, profile)
    for a in levels:
        full = procedure1(cloud, ctx, a, model.criterion, data)
        if "procedure1" in procedures:
            out[("procedure1", a)] = full
        if "procedure2" in procedures:
            out[("procedure2", a)] = procedure2(cloud, ctx, model, a, data, seed, profile, pl_values=pl)
        if "procedure3" in procedures:
            out[("procedure3", a)] = procedure3(ctx, model, a, data, seed, profile)
        if "projection" in procedures:
            out[("projection", a)] = projection_cs(full, model, data, seed, profile)
        if "percentile" in procedures:
            out[("percentile", a)] = percentile_cs(cloud, model.sub, a)
    return out


def run_replication(config: StudyConfig, rep_index: int, n: Optional[int] = None, dgp_index: int = 0) -> dict:
    """One simulated data set: coverage indicators and end points for every set.

    Returns
    -------
    dict
        ``{"excluded": bool, "results": {(procedure, level): (covered, lo, hi)}}``
    """
    model = get_model(config.model, **config.model_options)
    n = config.ns[0] if n is None else n
    dgp = config.resolved_dgps(model)[dgp_index]
    data_ss, smc_seed, opt_seed = _seeds(config, n, dgp_index, rep_index)
    data = model.simulate(dgp, n, data_ss)
    try:
        cloud = run_smc(model, data, config.smc_config(model, smc_seed))
    except DegeneracyError:
        return {"excluded": True, "results": {}}
    ctx = fit_context(model, data, cloud, opt_seed, config.n_top_starts)
    truth = model.truth(dgp, n)
    sets = build_sets(model, data, cloud, ctx, config.levels, config.procedures, opt_seed)
    m_lo, m_hi = truth.m_interval
    res = {}
    for (proc, a), cs in sets.items():
        if proc == "procedure1":
            covered = bool(np.all(cs.contains(truth.theta_points)))
            res[(proc, a)] = (covered, float("nan"), float("nan"))
        else:
            res[(proc, a)] = (bool(cs.covers(m_lo, m_hi)), cs.lo, cs.hi)
    return {"excluded": False, "results": res}


def _run_cell(args):
    config, rep, n, k = args
    return (n, k, rep), run_replication(config, rep, n, k)


@dataclass
class CoverageTable:
    rows: list

    def get(self, procedure: str, n: int, level: float, dgp: Optional[str] = None) -> dict:
        for r in self.rows:
            if r["procedure"] == procedure and r["n"] == n and abs(r["level"] - level) < 1e-12:
                if dgp is None or r["dgp"] == dgp:
                    return r
        raise KeyError((procedure, n, level, dgp))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r[k]) for k in TABLE_COLUMNS})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def aggregate(config: StudyConfig, outcomes: dict, labels: Sequence[str]) -> CoverageTable:
    """Reduce replication outcomes keyed by ``(n, dgp_index, rep)`` to table rows."""
    rows = []
    for n in config.ns:
        for k, label in enumerate(labels):
            reps = [outcomes[(n, k, r)] for r in range(config.R)]
            kept = [o for o in reps if not o["excluded"]]
            excluded = len(reps) - len(kept)
            for proc in config.procedures:
                for a in config.levels:
                    vals = [o["results"][(proc, a)] for o in kept]
                    cov = float(np.mean([v[0] for v in vals])) if vals else float("nan")
                    m = len(vals)
                    mcse = float(np.sqrt(cov * (1.0 - cov) / m)) if m else float("nan")
                    lo = np.array([v[1] for v in vals], dtype=float)
                    hi = np.array([v[2] for v in vals], dtype=float)
                    rows.append(
                        {
                            "procedure": proc,
                            "n": n,
                            "level": a,
                            "dgp": label,
                            "coverage": cov,
                            "mcse": mcse,
                            "mean_lo": float(np.mean(lo)) if m and np.all(np.isfinite(lo)) else float("nan"),
                            "mean_hi": float(np.mean(hi)) if m and np.all(np.isfinite(hi)) else float("nan"),
                            "excluded": excluded,
                        }
                    )
    return CoverageTable(rows)


def run_study(config: StudyConfig, threads: int = 1) -> CoverageTable:
    """Run every (n, DGP, replication) cell and aggregate the coverage table."""
    model = get_model(config.model, **config.model_options)
    dgps = config.resolved_dgps(model)
    labels = [dgp_label(d) for d in dgps]
    tasks = [(config, r, n, k) for n in config.ns for k in range(len(dgps)) for r in range(config.R)]
    outcomes = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for key, out in ex.map(_run_cell, tasks, chunksize=4):
                outcomes[key] = out
    else:
        for t in tasks:
            key, out = _run_cell(t)
            outcomes[key] = out
    return aggregate(config, outcomes, labels)


def reference_quantiles(reference: dict, probs) -> np.ndarray:
    kind = reference.get("kind")
    if kind == "chisq":
        return np.array([chisq_quantile(int(reference["df"]), p) for p in probs])
    if kind == "gamma":
        return np.asarray(gamma_quantile(float(reference["shape"]), float(reference["scale"]), probs))
    raise ValueError(f"unknown reference distribution {reference!r}")


def qq_data(cloud: ParticleCloud, ctx, reference, criterion=None, data=None) -> list:
    """Weighted QLR quantiles at percentiles 1..99 paired with reference quantiles.

    ``reference`` is ``{"kind": "chisq", "df": k}``, ``{"kind": "gamma",
    "shape": r, "scale": s}`` or ``"empirical"`` (the draws themselves).
    """
    q = posterior_qlr_draws(cloud, ctx, criterion, data)
    probs = np.arange(1, 100) / 100.0
    emp = np.array([weighted_quantile(q, cloud.weights, p) for p in probs])
    ref = emp.copy() if reference == "empirical" else reference_quantiles(reference, probs)
    return [{"percentile": float(p), "empirical": float(e), "reference": float(r)} for p, e, r in zip(probs, emp, ref)]


def version_string() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if desc.returncode == 0 and desc.stdout.strip():
            return f"{__version__}+{desc.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def study_manifest(config: StudyConfig) -> dict:
    cfg = asdict(config)
    cfg["dgps"] = [dict(d) for d in config.dgps]
    return {"version": version_string(), "config": cfg}


def write_manifest(config: StudyConfig, path) -> None:
    with open(path, "w") as fh:
        json.dump(study_manifest(config), fh, indent=2, sort_keys=True, default=list)


__all__ = [
    "ALL_PROCEDURES",
    "CoverageTable",
    "StudyConfig",
    "TABLE_COLUMNS",
    "aggregate",
    "build_sets",
    "dgp_label",
    "fit_context",
    "qq_data",
    "run_replication",
    "run_study",
    "study_manifest",
    "version_string",
]

