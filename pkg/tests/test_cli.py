from __future__ import annotations

import json
import subprocess
import sys

import pytest

from syncsim.cli import main
from syncsim.metrics import REPORT_COLUMNS, SWEEP_COLUMNS

CONFIG = {
    "worker_count": 5,
    "runs_per_replication": 2,
    "replications": 3,
    "task_graphs": {"count": 2, "total_tasks": 6},
}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(CONFIG))
    return p


def test_run_writes_outputs(config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out)]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS + SWEEP_COLUMNS) and len(lines) == 2
    decisions = [json.loads(line) for line in (out / "decisions.jsonl").read_text().splitlines()]
    assert decisions and all(list(d) == sorted(d) for d in decisions)
    meta = json.loads((out / "meta.json").read_text())
    assert meta["config"]["worker_count"] == 5 and meta["command"] == {"name": "run"}


def test_overrides_and_jsonl(config, tmp_path):
    out = tmp_path / "out"
    assert main(["run", "--config", str(config), "--out", str(out), "--seed", "9", "--replications", "1", "--runs", "1", "--format", "jsonl"]) == 0
    [row] = [json.loads(line) for line in (out / "report.jsonl").read_text().splitlines()]
    assert row["seed"] == 9
    assert json.loads((out / "meta.json").read_text())["config"]["replications"] == 1


def test_sweep(config, tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", "--config", str(config), "--out", str(out), "--param", "workers", "--values", "3,6"]) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[1].endswith(",workers,3") and lines[2].endswith(",workers,6")
    decisions = [json.loads(line) for line in (out / "decisions.jsonl").read_text().splitlines()]
    assert {d["sweep_value"] for d in decisions} == {3, 6}


def test_jobs_give_identical_bytes(config, tmp_path):
    outs = []
    for jobs in (1, 3):
        out = tmp_path / f"j{jobs}"
        assert main(["run", "--config", str(config), "--out", str(out), "--jobs", str(jobs)]) == 0
        outs.append(out)
    for name in ("report.csv", "decisions.jsonl", "meta.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_config_errors_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"syn_degree": 0.5}')
    assert main(["run", "--config", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "syn_degree" in capsys.readouterr().err
    assert main(["run", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == 2
    good = tmp_path / "good.json"
    good.write_text("{}")
    assert main(["sweep", "--config", str(good), "--out", str(tmp_path / "o"), "--param", "nope", "--values", "1"]) == 2


def test_trace_commands(tmp_path):
    mob, dur = tmp_path / "m.csv", tmp_path / "d.csv"
    assert main(["trace", "synth", "--kind", "mobility", "--count", "2", "--duration", "600", "--out", str(mob)]) == 0
    assert main(["trace", "synth", "--kind", "duration", "--count", "10", "--out", str(dur)]) == 0
    grid = tmp_path / "g.csv"
    assert main(["trace", "resample", "--input", str(mob), "--interval", "60", "--out", str(grid)]) == 0
    assert len(grid.read_text().splitlines()) == 1 + 2 * 10
    again = tmp_path / "again.csv"
    assert main(["trace", "export", "--kind", "duration", "--input", str(dur), "--out", str(again)]) == 0
    assert again.read_bytes() == dur.read_bytes()
    bad = tmp_path / "bad.csv"
    bad.write_text("node_id,timestamp,x,y\na,0,x,1\n")
    assert main(["trace", "resample", "--input", str(bad), "--out", str(grid)]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "syncsim.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("syncsim ")
