import csv
import json

import pytest
import yaml

from idset_mc.cli import main

FAST = ["--set", "smc.J=30"]


def run(args, capsys):
    code = main(args)
    return code, capsys.readouterr().err


def test_sample_writes_files_and_is_deterministic(tmp_path, capsys):
    args = ["sample", "--model", "missing-data-flat", "--n", "1000", "--eta2", "0.8", "--B", "300", "--seed", "7"]
    assert run(args + FAST + ["--out", str(tmp_path / "a")], capsys)[0] == 0
    assert run(args + FAST + ["--out", str(tmp_path / "b")], capsys)[0] == 0
    with open(tmp_path / "a" / "particles.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["b", "weight", "theta_1", "theta_2", "theta_3", "logL"]
    assert len(rows) == 301
    for name in ("particles.csv", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bad_particle_count_is_config_error(tmp_path, capsys):
    code, err = run(["sample", "--B", "1", "--out", str(tmp_path)], capsys)
    assert code == 2
    assert json.loads(err)["error"] == "config"


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"model": "missing-data-flat", "colour": "blue"}))
    code, err = run(["sample", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == 2 and "colour" in json.loads(err)["message"]
    code, _ = run(["sample", "--set", "smc.bogus=1", "--out", str(tmp_path)], capsys)
    assert code == 2


def test_unknown_model_rejected(tmp_path, capsys):
    assert run(["cs", "--model", "airline", "--out", str(tmp_path)], capsys)[0] == 2


def test_cs_nested_and_round_trip(tmp_path, capsys):
    args = ["cs", "--n", "1000", "--B", "400", "--seed", "3", "--levels", "0.9,0.95,0.99"] + FAST
    assert run(args + ["--out", str(tmp_path / "a")], capsys)[0] == 0
    doc = json.loads((tmp_path / "a" / "cs.json").read_text())
    by_kind = {}
    for s in doc["sets"]:
        by_kind.setdefault(s["kind"], []).append(s)
    assert set(by_kind) == {"procedure1", "procedure2", "procedure3", "projection", "percentile"}
    for kind, sets in by_kind.items():
        sets.sort(key=lambda s: s["level"])
        if kind == "procedure1":
            assert [s["zeta"] for s in sets] == sorted((s["zeta"] for s in sets), reverse=True)
        else:
            for a, b in zip(sets, sets[1:]):
                assert b["lo"] <= a["lo"] and a["hi"] <= b["hi"]
    manifest = tmp_path / "a" / "manifest.json"
    assert run(["cs", "--config", str(manifest), "--out", str(tmp_path / "b")], capsys)[0] == 0
    assert (tmp_path / "a" / "cs.json").read_bytes() == (tmp_path / "b" / "cs.json").read_bytes()


def test_coverage_only_requested_procedure(tmp_path, capsys):
    args = ["coverage", "--n", "300", "--B", "200", "--R", "3", "--procedures", "percentile",
            "--levels", "0.9", "--threads", "1", "--out", str(tmp_path)] + FAST
    assert run(args, capsys)[0] == 0
    with open(tmp_path / "coverage.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert {r["procedure"] for r in rows} == {"percentile"}
    assert list(rows[0]) == ["procedure", "n", "level", "dgp", "coverage", "mcse", "mean_lo", "mean_hi", "excluded"]


def test_qq_output(tmp_path, capsys):
    args = ["qq", "--model", "uniform-support", "--n", "500", "--B", "300", "--out", str(tmp_path)] + FAST
    assert run(args, capsys)[0] == 0
    with open(tmp_path / "qq.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 99 and float(rows[0]["percentile"]) == pytest.approx(0.01)


def test_threads_env_fallback(monkeypatch):
    from idset_mc.cli import _threads

    monkeypatch.setenv("IDSET_MC_THREADS", "3")
    assert _threads({"threads": None}) == 3
    assert _threads({"threads": 2}) == 2


def test_vector_subvector_interval_request_rejected(tmp_path, capsys, monkeypatch):
    from idset_mc import cli
    from idset_mc.models import missing_data as md
    from idset_mc.params import SubvectorMap

    real = cli.get_model

    def vector_model(name, **kw):
        m = real(name, **kw)
        return m.__class__(**{**m.__dict__, "sub": SubvectorMap((0, 1), 3)})

    monkeypatch.setattr(cli, "get_model", vector_model)
    code, err = run(["cs", "--procedures", "procedure2", "--out", str(tmp_path)], capsys)
    assert code == 2 and md is not None
