import csv
import json
import subprocess
import sys

import pytest

from planroute import __version__
from planroute.cli import main
from planroute.traces import read_jsonl

from conftest import FIXTURES, SCENARIOS


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_equilibrium_from_shares(capsys, tmp_path):
    code, out, _ = run(capsys, "equilibrium", "--shares", "1/10,1/5,7/10", "--out", tmp_path)
    assert code == 0
    assert "F = 13/20  equilibrium check: pass" in out
    record = json.loads((tmp_path / "equilibrium.json").read_text())
    assert record["lambdas"] == ["1", "1", "1/2"]
    assert record["oracle_F"] == "13/20"


def test_equilibrium_equal_and_float(capsys):
    code, out, _ = run(capsys, "equilibrium", "--equal", 4)
    assert code == 0 and "F = 4/5" in out
    code, out, _ = run(capsys, "equilibrium", "--equal", 4, "--mode", "float")
    assert code == 0 and "F = 0.8" in out


def test_equilibrium_rejects_bad_shares(capsys):
    code, _, err = run(capsys, "equilibrium", "--shares", "1/2,1/3")
    assert code == 2 and "sum" in err
    code, _, err = run(capsys, "equilibrium", "--shares", "1/2,x")
    assert code == 2


def test_sweep(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "--start", 1, "--stop", 6, "--out", tmp_path)
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "# engine=planroute"
    rows = list(csv.DictReader(line for line in lines if not line.startswith("#")))
    assert [r["F"] for r in rows] == ["1/2", "2/3", "3/4", "4/5", "5/6", "6/7"]
    assert [r["regime"] for r in rows] == ["impossible", "impossible", "edge_case", "punishment", "punishment", "punishment"]
    assert [r["N"] for r in rows[3:]] == ["11", "7", "5"]
    assert "edge_case" in out


def test_sweep_range_error(capsys):
    assert run(capsys, "sweep", "--start", 3, "--stop", 2)[0] == 2


def test_simulate_writes_traces(capsys, tmp_path):
    code, out, _ = run(capsys, "simulate", "--config", SCENARIOS / "four_equal_punishment.yaml", "--out", tmp_path)
    assert code == 0
    records = read_jsonl(tmp_path / "trace.jsonl")
    head = records[0]
    assert head["type"] == "header" and head["engine"] == "planroute" and head["version"] == __version__
    assert head["seed"] == 0 and len(head["config_hash"]) == 16
    assert [r["total_cost"] for r in records[1:5]] == ["3/4", "3/4", "1201/1600", "21/25"]
    text = (tmp_path / "trace.csv").read_text().splitlines()
    assert text[:4] == ["# engine=planroute", f"# version={__version__}", "# seed=0", f"# config_hash={head['config_hash']}"]
    assert text[4] == "stage,bottom_flow,total_cost"
    assert text[7] == "3,21/40,1201/1600"
    assert (tmp_path / "scenario.yaml").exists()
    assert "1201/1600" in out


def test_simulate_horizon_override(capsys, tmp_path):
    run(capsys, "simulate", "--config", SCENARIOS / "static_half.yaml", "--horizon", 3, "--out", tmp_path)
    assert len(read_jsonl(tmp_path / "trace.jsonl")) == 4


def test_verify_violation_exit_code(capsys, tmp_path):
    args = ["verify", "--config", SCENARIOS / "static_half.yaml", "--checks", "ir,optimality", "--out", tmp_path]
    code, out, _ = run(capsys, *args)
    assert code == 1
    assert "violation" in out
    records = read_jsonl(tmp_path / "verify.jsonl")
    assert records[0]["kind"] == "verify"
    assert [r["desideratum"] for r in records[1:]] == ["individual_rationality", "optimality"]


def test_verify_pass_exit_code(capsys):
    args = ["verify", "--config", SCENARIOS / "four_equal_punishment.yaml", "--checks", "optimality,ncp", "--horizon", 30]
    code, out, _ = run(capsys, *args)
    assert code == 0
    assert out.count("pass-on-family") == 2


def test_verify_unknown_check(capsys):
    code, _, err = run(capsys, "verify", "--config", SCENARIOS / "static_half.yaml", "--checks", "speed")
    assert code == 2 and "unknown check" in err


def test_impossibility_finds_witness(capsys, tmp_path):
    args = ["impossibility", "--config", SCENARIOS / "two_equal_punishment.yaml", "--segments", 20, "--out", tmp_path]
    code, out, _ = run(capsys, *args)
    assert code == 1
    assert "profitable defection" in out
    (record,) = read_jsonl(tmp_path / "impossibility.jsonl")[1:]
    assert record["verdict"] == "violation" and record["replay_matches"]


def test_impossibility_precondition(capsys):
    code, _, err = run(capsys, "impossibility", "--config", SCENARIOS / "four_equal_punishment.yaml")
    assert code == 2 and "segment count too small" in err


@pytest.mark.parametrize("path", sorted(FIXTURES.glob("bad_*.yaml")), ids=lambda p: p.stem)
def test_bad_configs_exit_2(capsys, path, tmp_path):
    code, _, err = run(capsys, "simulate", "--config", path, "--out", tmp_path)
    assert code == 2
    assert err.startswith(f"error: {path}:")


def test_usage_errors(capsys):
    assert run(capsys, "simulate")[0] == 2
    assert run(capsys, "frobnicate")[0] == 2
    code, out, _ = run(capsys, "--version")
    assert code == 0 and __version__ in out


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "planroute", "equilibrium", "--equal", "2"], capture_output=True, text=True, check=False
    )
    assert proc.returncode == 0
    assert "F = 2/3" in proc.stdout
