"""Shared fixtures and the suite-wide run registry.

Every simulation executed anywhere in the test session goes through
``Simulation.run``; the wrapper installed here records, per run, the
structural-invariant verdict and whatever the slashing detectors find in
honest-sent messages.  The acceptance tests read the registry, and the
terminal summary fails the session if any run ever broke either property.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import pytest

from ebbflow import simnet
from ebbflow.properties import check_prefix_and_monotone
from ebbflow.scenario import parse_scenario
from ebbflow.slashing import detect_all

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


@dataclass(frozen=True)
class RunRecord:
    config: simnet.SimConfig
    structural_ok: bool
    structural_line: str
    honest_slashed: tuple[int, ...]


RUNS: list[RunRecord] = []
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def _recording_run(original):
    def run(self):
        trace = original(self)
        verdict = check_prefix_and_monotone(trace)
        RUNS.append(
            RunRecord(
                trace.config,
                verdict.ok,
                verdict.line(),
                tuple(sorted(detect_all(trace.honest_messages()))),
            )
        )
        return trace

    return run


_original_run = simnet.Simulation.run
simnet.Simulation.run = _recording_run(_original_run)


def load_scenario(name: str) -> simnet.SimConfig:
    return parse_scenario((SCENARIOS / f"{name}.scn").read_text())


@pytest.fixture
def scenario():
    return load_scenario


def pytest_collection_modifyitems(session, config, items):
    # Acceptance tests go last, and AC-11 after them, so the structural
    # check covers every other simulation in the session.
    def order(item):
        if item.module.__name__ != "test_acceptance":
            return 0
        return 2 if item.name == "test_ac11_structural_invariants" else 1

    items.sort(key=order)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    tr = terminalreporter
    if ACCEPTANCE:
        tr.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: int(k.split("-")[1])):
            ok, detail = ACCEPTANCE[key]
            tr.write_line(f"{key} {'PASS' if ok else 'FAIL'}: {detail}")
    if not RUNS:
        return
    broken = [r for r in RUNS if not r.structural_ok]
    slashed = [r for r in RUNS if r.honest_slashed]
    tr.section("suite-wide run invariants")
    tr.write_line(
        f"runs={len(RUNS)} structural_violations={len(broken)} honest_slashable_runs={len(slashed)}"
    )
    for r in (broken + slashed)[:5]:
        tr.write_line(f"  {r.structural_line} honest_slashed={r.honest_slashed} config={r.config}")


def pytest_sessionfinish(session, exitstatus):
    if any(not r.structural_ok or r.honest_slashed for r in RUNS):
        session.exitstatus = pytest.ExitCode.TESTS_FAILED
