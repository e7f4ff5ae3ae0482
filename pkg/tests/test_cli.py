import csv
import json

import pytest

from ljfuse.cli import main
from ljfuse.pipeline import SWEEP_COLUMNS, trace_header


def _write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


SMALL = {
    "name": "small",
    "seed": 1,
    "instance": {"generate": {"n_agents": 4, "dim": 2}, "graph": {"kind": "cycle"}},
    "simulation": {"dt": 1e-3, "t_end": 2.0, "record_every": 10},
    "containment": {"probes": 2, "samples": 500},
    "fusion": {"enabled": True},
    "output": {"plots": False},
}


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_unknown_key_exits_2_and_names_it(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {**SMALL, "simulation": {"dtt": 0.1}})
    assert main(["run", "--config", cfg]) == 2
    err = _error(capsys)
    assert err["exit_code"] == 2 and "simulation.dtt" in err["message"]


def test_missing_file_and_bad_json_exit_2(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "none.json")]) == 2
    assert "not found" in _error(capsys)["message"]
    (tmp_path / "bad.json").write_text("{oops")
    assert main(["oracle", "--config", str(tmp_path / "bad.json")]) == 2


def test_tune_with_bad_bounds_exits_3(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {**SMALL, "simulation": {"b_lo": 0.0, "b_hi": 1.1}})
    assert main(["tune", "--config", cfg]) == 3
    assert _error(capsys)["exit_code"] == 3


def test_tune_auto_reports_validation(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", {**SMALL, "protocol": {"tune": "auto", "cost": "trace"}})
    assert main(["tune", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rep = json.loads((tmp_path / "o" / "tune.json").read_text())
    assert rep["validation"]["passed"] is True


def test_oracle_on_single_agent(tmp_path, capsys):
    cfg = _write(tmp_path / "i.json", {"matrices": [[[2.0, 0.0], [0.0, 1.0]]]})
    assert main(["oracle", "--config", cfg, "--cost", "trace", "logdet", "trace_inverse"]) == 0
    out = json.loads(capsys.readouterr().out)
    for kind in ("trace", "logdet", "trace_inverse"):
        assert out[kind]["simplex"]["lambda_star"] == [1.0]
    assert out["trace_inverse"]["simplex"]["f_star"] == pytest.approx(3.0)


def test_run_writes_artifacts_and_fuse_round_trips(tmp_path, capsys):
    cfg = _write(tmp_path / "c.json", SMALL)
    out = tmp_path / "run"
    assert main(["run", "--config", cfg, "--out", str(out), "--no-plots"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    printed = json.loads(capsys.readouterr().out)
    assert printed["events"] == summary["events"]
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == trace_header(4)
    assert float(rows[-1][2]) == summary["terminal_f"]
    assert not list(out.glob("*.svg"))
    # a coarse step leaves the Q estimates too far apart for the fusion pass
    assert summary["fusion"]["error"] == "consensus_never_reached"
    assert main(["fuse", "--config", cfg, "--state", str(out / "final_state.json")]) == 1
    assert _error(capsys)["error"] == "consensus_never_reached"


def test_fuse_on_converged_state(tmp_path, capsys):
    cfg = {**SMALL, "simulation": {"dt": 1e-5, "t_end": 1.5, "record_every": 1000}, "output": {"plots": True}}
    path = _write(tmp_path / "c.json", cfg)
    out = tmp_path / "run"
    assert main(["run", "--config", path, "--out", str(out)]) == 0
    capsys.readouterr()
    summary = json.loads((out / "summary.json").read_text())
    assert "agents" in summary["fusion"]
    assert {p.name for p in out.glob("*.svg")} == {"consensus.svg", "weights.svg", "ellipses.svg"}
    assert main(["fuse", "--config", path, "--state", str(out / "final_state.json")]) == 0
    fused = json.loads(capsys.readouterr().out)
    assert len(fused["agents"]) == 4


def test_seed_override_changes_instance(tmp_path):
    cfg = _write(tmp_path / "c.json", SMALL)
    main(["run", "--config", cfg, "--out", str(tmp_path / "a"), "--seed", "5"])
    main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "6"])
    a = json.loads((tmp_path / "a" / "instance.json").read_text())
    b = json.loads((tmp_path / "b" / "instance.json").read_text())
    assert a != b


def test_sweep_respects_thread_cap(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("LJFUSE_THREADS", "1")
    cfg = {**SMALL, "sweep": {"graph": "cycle", "cells": [{"n_agents": 4, "dim": 2}, {"n_agents": 5, "dim": 2}]}}
    path = _write(tmp_path / "c.json", cfg)
    assert main(["sweep", "--config", path, "--out", str(tmp_path / "s")]) == 0
    with open(tmp_path / "s" / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0].keys()) == SWEEP_COLUMNS
    assert [r["N"] for r in rows] == ["4", "5"]
