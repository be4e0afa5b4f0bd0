"""Command line entry point.

``ebbflow run FILE [--out DIR]``
    Simulate one scenario, run every checker and optionally write
    ``trace.txt``, ``verdicts.json`` and ``metrics.json`` to ``DIR``.
``ebbflow fuzz FILE --runs N --seed S [--corrupt K] [--out DIR]``
    Rejection-sample ``N`` compliant sleep and corruption schedules around
    the scenario and check each run.
``ebbflow oracle {forkchoice,ffg} --cases N --seed S``
    Compare the optimized fork choice or finality code with brute force.

Exit status is 0 when every non-skipped check passes, 1 when some check
fails and 2 for usage, parse or constraint errors.  ``EBBFLOW_LOG`` sets
the log level (for example ``DEBUG``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import random
import sys
from dataclasses import asdict
from pathlib import Path

from .adversary import NoCompliantSchedule, sample_compliant
from .oracles import run_oracle
from .properties import FAIL, Verdict, latency_metrics, run_all_checks
from .scenario import ConstraintError, ParseError, parse_scenario
from .simnet import SimConfig, run

log = logging.getLogger("ebbflow")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _load(path: str) -> SimConfig:
    return parse_scenario(Path(path).read_text())


def _verdict_json(v: Verdict) -> dict:
    out = asdict(v)
    out["witness"] = list(v.witness) if v.witness is not None else None
    return out


def cmd_run(scenario: SimConfig, out_dir: str | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    trace = run(scenario)
    verdicts = run_all_checks(trace, scenario)
    metrics = latency_metrics(trace).summary()
    for v in verdicts:
        print(v.line(), file=stream)
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.txt").write_text(trace.serialize())
        (out / "verdicts.json").write_text(json.dumps([_verdict_json(v) for v in verdicts], indent=2, default=str) + "\n")
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        log.info("wrote results to %s", out)
    return EXIT_FAIL if any(v.status == FAIL for v in verdicts) else EXIT_OK


def cmd_fuzz(
    base: SimConfig,
    runs: int,
    seed: int,
    corrupt: int | None = None,
    out_dir: str | None = None,
    stream=None,
) -> int:
    stream = stream or sys.stdout
    k = len({vid for vid, _ in base.corrupt}) if corrupt is None else corrupt
    failures = 0
    rejected = 0
    for i in range(runs):
        rng = random.Random(f"fuzz:{seed}:{i}")
        cfg, rej = sample_compliant(base.with_(seed=rng.randrange(2**31)), rng, corrupt_count=k)
        rejected += rej
        trace = run(cfg)
        bad = [v for v in run_all_checks(trace, cfg) if v.status == FAIL]
        if bad:
            failures += 1
            print(f"run {i} seed={cfg.seed}: " + "; ".join(v.line() for v in bad), file=stream)
            if out_dir:
                out = Path(out_dir) / f"seed-{cfg.seed}"
                out.mkdir(parents=True, exist_ok=True)
                (out / "trace.txt").write_text(trace.serialize())
    print(f"fuzz runs={runs} failures={failures} rejected_schedules={rejected}", file=stream)
    return EXIT_FAIL if failures else EXIT_OK


def cmd_oracle(kind: str, cases: int, seed: int, stream=None) -> int:
    stream = stream or sys.stdout
    results = run_oracle(kind, cases, seed)
    for r in results:
        print(f"{r.kind}: cases={r.cases} mismatches={r.mismatches}"
              + (f" first={r.first_mismatch}" if r.first_mismatch is not None else ""), file=stream)
    return EXIT_OK if all(r.ok for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ebbflow", description="Ebb-and-flow consensus simulator and checkers.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and check it")
    r.add_argument("scenario")
    r.add_argument("--out", metavar="DIR")

    f = sub.add_parser("fuzz", help="check many compliant random schedules")
    f.add_argument("scenario")
    f.add_argument("--runs", type=int, required=True)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--corrupt", type=int, default=None, help="corrupted validators per run")
    f.add_argument("--out", metavar="DIR")

    o = sub.add_parser("oracle", help="compare against brute-force oracles")
    o.add_argument("kind", choices=["forkchoice", "ffg"])
    o.add_argument("--cases", type=int, required=True)
    o.add_argument("--seed", type=int, default=0)
    return p


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("EBBFLOW_LOG", "WARNING").upper(), format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "run":
            return cmd_run(_load(args.scenario), args.out)
        if args.command == "fuzz":
            if args.runs < 0:
                raise ConstraintError("--runs must be non-negative")
            return cmd_fuzz(_load(args.scenario), args.runs, args.seed, args.corrupt, args.out)
        if args.cases < 0:
            raise ConstraintError("--cases must be non-negative")
        return cmd_oracle(args.kind, args.cases, args.seed)
    except (ParseError, ConstraintError, NoCompliantSchedule, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
