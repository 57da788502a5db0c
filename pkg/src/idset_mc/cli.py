"""Command-line front end.

Subcommands ``sample``, ``cs``, ``coverage`` and ``qq``.  Settings come from an
optional YAML file, then ``--set key=value`` overrides (dotted keys reach into
``smc`` and ``dgp``), then the direct flags.  Every run writes
``manifest.json`` with the resolved configuration; feeding it back through
``--config`` reproduces the same outputs.

Exit codes: 0 success, 2 configuration error, 3 sampler degeneracy, 1 any other
failure.  On error a one-line JSON object is written to stderr.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys

import numpy as np
import yaml

from .models import PRESET_NAMES, get_model
from .smc import ConfigError, DegeneracyError, SmcConfig, run_smc
from .study import ALL_PROCEDURES, StudyConfig, build_sets, fit_context, qq_data, run_study, version_string

DEFAULTS = {
    "model": "missing-data-flat",
    "model_options": {},
    "n": 1000,
    "ns": None,
    "dgp": {},
    "dgps": None,
    "seed": 0,
    "smc": {"B": 10000, "J": 200, "lam": 2.0, "target_accept": 0.35},
    "levels": [0.90, 0.95, 0.99],
    "procedures": list(ALL_PROCEDURES),
    "R": 500,
    "reference": None,
    "out": ".",
    "threads": None,
}

SMC_KEYS = set(SmcConfig.__dataclass_fields__) - {"seed"}


class CliError(Exception):
    def __init__(self, message: str, code: int = 2):
        super().__init__(message)
        self.code = code


def _parse_value(text: str):
    return yaml.safe_load(text)


def _set_dotted(cfg: dict, key: str, value) -> None:
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            if p not in ("smc", "dgp", "model_options"):
                raise CliError(f"unknown config key {key!r}")
            node[p] = {}
        node = node[p]
    node[parts[-1]] = value


def _validate(cfg: dict) -> None:
    unknown = set(cfg) - set(DEFAULTS) - {"version", "command"}
    if unknown:
        raise CliError(f"unknown config keys: {sorted(unknown)}")
    bad_smc = set(cfg["smc"]) - SMC_KEYS
    if bad_smc:
        raise CliError(f"unknown smc keys: {sorted(bad_smc)}")
    if cfg["model"] not in PRESET_NAMES:
        raise CliError(f"unknown model {cfg['model']!r}; choose from {', '.join(PRESET_NAMES)}")
    bad = [p for p in cfg["procedures"] if p not in ALL_PROCEDURES]
    if bad:
        raise CliError(f"unknown procedures {bad}")
    if not all(0.0 < float(a) < 1.0 for a in cfg["levels"]):
        raise CliError("levels must lie in (0, 1)")


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                loaded = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise CliError(f"cannot read config: {exc}") from None
        if not isinstance(loaded, dict):
            raise CliError("config file must hold a mapping")
        if "config" in loaded and "version" in loaded:
            # a study manifest: use its resolved config block
            loaded = loaded["config"]
        loaded.pop("version", None)
        loaded.pop("command", None)
        for k, v in loaded.items():
            if k == "smc" and isinstance(v, dict):
                cfg["smc"].update(v)
            else:
                cfg[k] = v
    for item in args.set or []:
        if "=" not in item:
            raise CliError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        if k.split(".")[0] not in DEFAULTS:
            raise CliError(f"unknown config key {k!r}")
        _set_dotted(cfg, k.strip(), _parse_value(v))
    direct = {
        "model": args.model,
        "n": args.n,
        "seed": args.seed,
        "out": args.out,
        "threads": args.threads,
        "R": getattr(args, "R", None),
    }
    for k, v in direct.items():
        if v is not None:
            cfg[k] = v
    if args.B is not None:
        cfg["smc"]["B"] = args.B
    if args.eta2 is not None:
        cfg["dgp"] = {**{k: v for k, v in cfg["dgp"].items() if k != "c"}, "eta2": args.eta2}
    if args.procedures:
        cfg["procedures"] = [p.strip() for p in args.procedures.split(",") if p.strip()]
    if args.levels:
        cfg["levels"] = [float(a) for a in args.levels.split(",")]
    cfg["levels"] = [float(a) for a in cfg["levels"]]
    _validate(cfg)
    return cfg


def _threads(cfg: dict) -> int:
    t = cfg.get("threads") or os.environ.get("IDSET_MC_THREADS")
    if t:
        return max(1, int(t))
    return os.cpu_count() or 1


def _model_and_data(cfg: dict):
    model = get_model(cfg["model"], **cfg["model_options"])
    dgp = {**model.default_dgp, **cfg["dgp"]}
    if "eta2" in cfg["dgp"]:
        dgp.pop("c", None)
    seeds = np.random.SeedSequence(int(cfg["seed"])).spawn(3)
    data = model.simulate(dgp, int(cfg["n"]), seeds[0])
    smc_seed = int(seeds[1].generate_state(1, dtype=np.uint64)[0])
    opt_seed = int(seeds[2].generate_state(1, dtype=np.uint32)[0])
    return model, dgp, data, smc_seed, opt_seed


def _smc_config(model, cfg: dict, seed: int) -> SmcConfig:
    opts = dict(model.smc_defaults)
    opts.update(cfg["smc"])
    opts["seed"] = seed
    try:
        return SmcConfig(**opts)
    except (ConfigError, TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None


def _sample(cfg: dict):
    model, dgp, data, smc_seed, opt_seed = _model_and_data(cfg)
    cloud = run_smc(model, data, _smc_config(model, cfg, smc_seed))
    return model, dgp, data, cloud, opt_seed


def _write_particles(path, model, cloud, n) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["b", "weight", *[f"theta_{i + 1}" for i in range(model.space.dim)], "logL"])
        for b in range(cloud.B):
            w.writerow([b, repr(float(cloud.weights[b])), *[repr(float(x)) for x in cloud.thetas[b]],
                        repr(float(cloud.log_crit[b] / n))])


def _write_rows(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items() if k in columns})


def _manifest(cfg: dict, command: str, out: str) -> None:
    doc = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    doc["command"] = command
    doc["version"] = version_string()
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


def cmd_sample(cfg: dict) -> None:
    model, _, data, cloud, _ = _sample(cfg)
    out = cfg["out"]
    _write_particles(os.path.join(out, "particles.csv"), model, cloud, data.n)
    _write_rows(os.path.join(out, "diagnostics.csv"), cloud.diagnostics,
                ["stage", "phi", "ess", "sigma", "accept_rate", "logZ_increment"])


def cmd_cs(cfg: dict) -> None:
    model = get_model(cfg["model"], **cfg["model_options"])
    interval = {"procedure2", "procedure3", "projection", "percentile"} & set(cfg["procedures"])
    if interval and not model.sub.scalar:
        raise CliError("interval procedures need a scalar subvector")
    model, dgp, data, cloud, opt_seed = _sample(cfg)
    ctx = fit_context(model, data, cloud, opt_seed)
    sets = build_sets(model, data, cloud, ctx, cfg["levels"], cfg["procedures"], opt_seed)
    doc = {
        "model": cfg["model"],
        "n": int(data.n),
        "dgp": dgp,
        "l_hat": float(ctx.l_hat),
        "theta_hat": [float(x) for x in ctx.theta_hat],
        "sets": [cs.to_dict() for cs in sets.values()],
    }
    with open(os.path.join(cfg["out"], "cs.json"), "w") as fh:
        json.dump(doc, fh, indent=2)


def _default_reference(model) -> dict:
    if model.name.startswith("uniform"):
        return {"kind": "gamma", "shape": 1.0, "scale": 2.0}
    if model.name.startswith("entry"):
        return {"kind": "chisq", "df": 3}
    return {"kind": "chisq", "df": 2}


def cmd_qq(cfg: dict) -> None:
    model, _, data, cloud, opt_seed = _sample(cfg)
    ctx = fit_context(model, data, cloud, opt_seed)
    ref = cfg["reference"] or _default_reference(model)
    rows = qq_data(cloud, ctx, ref)
    _write_rows(os.path.join(cfg["out"], "qq.csv"), rows, ["percentile", "empirical", "reference"])


def _study_config(cfg: dict) -> StudyConfig:
    ns = cfg["ns"] or [cfg["n"]]
    dgps = cfg["dgps"] or ([cfg["dgp"]] if cfg["dgp"] else [])
    try:
        return StudyConfig(
            model=cfg["model"],
            model_options=dict(cfg["model_options"]),
            dgps=tuple(dgps),
            ns=tuple(ns),
            levels=tuple(cfg["levels"]),
            R=int(cfg["R"]),
            smc={k: v for k, v in cfg["smc"].items()},
            procedures=tuple(cfg["procedures"]),
            base_seed=int(cfg["seed"]),
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None


def cmd_coverage(cfg: dict) -> None:
    sc = _study_config(cfg)
    model = get_model(sc.model, **sc.model_options)
    _smc_config(model, cfg, 0)
    table = run_study(sc, threads=_threads(cfg))
    table.to_csv(os.path.join(cfg["out"], "coverage.csv"))


COMMANDS = {"sample": cmd_sample, "cs": cmd_cs, "coverage": cmd_coverage, "qq": cmd_qq}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="idset-mc", description="SMC confidence sets for identified sets.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML config file or a previous manifest.json")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override, e.g. smc.J=100")
        s.add_argument("--model", help=f"preset: {', '.join(PRESET_NAMES)}")
        s.add_argument("--n", type=int)
        s.add_argument("--eta2", type=float, help="missing-data DGP: observation probability P(D = 1)")
        s.add_argument("--B", type=int, help="number of particles")
        s.add_argument("--seed", type=int)
        s.add_argument("--procedures", help="comma separated subset of " + ",".join(ALL_PROCEDURES))
        s.add_argument("--levels", help="comma separated nominal levels")
        s.add_argument("--out", help="output directory")
        s.add_argument("--threads", type=int, help="worker processes (default IDSET_MC_THREADS or all cores)")
        if name == "coverage":
            s.add_argument("--R", type=int, help="replications")
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail(2, "usage", "invalid command line")
    try:
        cfg = resolve_config(args)
        os.makedirs(cfg["out"], exist_ok=True)
        COMMANDS[args.command](cfg)
        _manifest(cfg, args.command, cfg["out"])
    except CliError as exc:
        return _fail(exc.code, "config", str(exc))
    except ConfigError as exc:
        return _fail(2, "config", str(exc))
    except DegeneracyError as exc:
        return _fail(3, "degeneracy", str(exc))
    except Exception as exc:  # noqa: BLE001
        return _fail(1, type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
