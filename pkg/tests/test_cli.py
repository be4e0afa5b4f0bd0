import json
import os
import subprocess
import sys

import pytest

from ebbflow import cli
from ebbflow.properties import FAIL, Verdict
from conftest import SCENARIOS


def scn(name):
    return str(SCENARIOS / f"{name}.scn")


def test_run_writes_results(tmp_path, capsys):
    out = tmp_path / "res"
    assert cli.main(["run", scn("ac1_finality"), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["metrics.json", "trace.txt", "verdicts.json"]
    verdicts = json.loads((out / "verdicts.json").read_text())
    assert {v["name"] for v in verdicts} >= {"available_safety", "finality_liveness"}
    assert json.loads((out / "metrics.json").read_text())["available"]["median"] == 2
    assert "finality_liveness | pass" in capsys.readouterr().out


def test_accountability_scenario_passes(capsys):
    assert cli.main(["run", scn("ac5_accountability")]) == 0
    assert "finalized_safety_accountability | pass" in capsys.readouterr().out


def test_failing_check_exits_one(monkeypatch, capsys):
    broken = Verdict("available_safety", FAIL, witness=(0, 1), reason="injected")
    monkeypatch.setattr(cli, "run_all_checks", lambda trace, cfg: [broken])
    assert cli.main(["run", scn("ac1_finality")]) == 1
    assert "| fail |" in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [["run", "/nonexistent.scn"], ["oracle", "sideways", "--cases", "1"], ["fuzz", "x"], []],
)
def test_usage_errors_exit_two(argv, capsys):
    assert cli.main(argv) == 2


def test_bad_scenario_exits_two(tmp_path, capsys):
    bad = tmp_path / "bad.scn"
    bad.write_text("n = 4\nwhat = 1\n")
    assert cli.main(["run", str(bad)]) == 2
    assert "line 2, column 1" in capsys.readouterr().err


def test_fuzz_zero_runs_and_determinism(capsys):
    assert cli.main(["fuzz", scn("ac1_finality"), "--runs", "0"]) == 0
    assert "fuzz runs=0 failures=0" in capsys.readouterr().out
    args = ["fuzz", scn("ac7_equivocation"), "--runs", "3", "--seed", "11"]
    assert cli.main(args) == 0
    first = capsys.readouterr().out
    assert cli.main(args) == 0
    assert capsys.readouterr().out == first


def test_oracle(capsys):
    assert cli.main(["oracle", "ffg", "--cases", "0"]) == 0
    assert cli.main(["oracle", "forkchoice", "--cases", "25", "--seed", "3"]) == 0
    out = capsys.readouterr().out
    assert "mfc: cases=25 mismatches=0" in out and "rlmd_ghost: cases=25 mismatches=0" in out


def test_module_entry_point():
    env = dict(os.environ, EBBFLOW_LOG="INFO")
    proc = subprocess.run(
        [sys.executable, "-m", "ebbflow", "oracle", "ffg", "--cases", "5"],
        capture_output=True, text=True, env=env,
    )
    assert proc.returncode == 0 and "ffg: cases=5 mismatches=0" in proc.stdout
