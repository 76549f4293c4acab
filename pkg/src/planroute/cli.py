"""Command line entry point.

Exit codes: 0 when every check passes, 1 when a violation is found, 2 for
configuration or usage errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .config import ConfigError, config_hash, dump_scenario, load_scenario
from .equilibrium import (
    ConvergenceError,
    EquilibriumError,
    Partition,
    best_response_iteration_oracle,
    solve_planner_equilibrium,
    verify_planner_equilibrium,
)
from .game import GameError
from .network import NetworkError
from .numeric import MODES, RATIONAL, fmt, parse_number, to_jsonable
from .scenario import ScenarioError
from .strategies import StrategyError, compute_punishment_length
from .traces import report_jsonl, rows_csv, trace_csv, trace_jsonl, write_text
from .verify import (
    DeviationFamily,
    VerifyError,
    check_individual_rationality,
    check_no_collective_punishment_run,
    check_optimality,
    check_resilience,
    find_profitable_defection,
    replay_witness,
)

EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG = 0, 1, 2
CHECKS = ("ir", "resilience", "optimality", "ncp")
USER_ERRORS = (ConfigError, ScenarioError, VerifyError, StrategyError, EquilibriumError, NetworkError, GameError)


def _numbers(text: str, mode: str) -> List:
    try:
        return [parse_number(part, mode) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _table(header: Sequence[str], rows: Sequence[Sequence[object]]) -> str:
    cells = [[str(h) for h in header]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def _load(args):
    scenario = load_scenario(args.config, args.mode)
    changes = {}
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
        changes["verify_horizon"] = args.horizon
    if getattr(args, "segments", None) is not None:
        changes["segments"] = args.segments
    if getattr(args, "discount", None) is not None and args.command == "verify":
        changes["discounts"] = tuple(_numbers(args.discount, scenario.mode))
    return scenario.with_(**changes) if changes else scenario


# --- subcommands ---------------------------------------------------------------------


def cmd_equilibrium(args) -> int:
    mode = args.mode or RATIONAL
    if args.config:
        scenario = load_scenario(args.config, args.mode)
        partition = scenario.partition
    elif args.shares:
        partition = Partition(tuple(_numbers(args.shares, mode)))
    else:
        partition = Partition.equal(args.equal or 1, mode)
    sol = solve_planner_equilibrium(partition)
    check = verify_planner_equilibrium(partition, sol.lambdas)
    try:
        oracle = best_response_iteration_oracle(partition, [0] * len(partition))
        oracle_F = oracle.F
    except ConvergenceError:
        oracle_F = None
    rows = [(i + 1, fmt(a), fmt(l)) for i, (a, l) in enumerate(zip(partition, sol.lambdas))]
    print(_table(["planner", "share", "lambda"], rows))
    print(f"F = {fmt(sol.F)}  equilibrium check: {'pass' if check.ok else 'fail'}")
    record = {
        "shares": list(partition),
        "lambdas": list(sol.lambdas),
        "F": sol.F,
        "verified": check.ok,
        "oracle_F": oracle_F,
    }
    print(json.dumps(to_jsonable(record)))
    if args.out:
        write_text(Path(args.out) / "equilibrium.json", json.dumps(to_jsonable(record), indent=2) + "\n")
    return EXIT_OK if check.ok else EXIT_VIOLATION


def cmd_simulate(args) -> int:
    scenario = _load(args)
    history = scenario.simulate()
    digest = config_hash(scenario)
    out = Path(args.out or "out")
    write_text(out / "trace.jsonl", trace_jsonl(scenario, history, digest))
    write_text(out / "trace.csv", trace_csv(scenario, history, digest))
    write_text(out / "scenario.yaml", dump_scenario(scenario))
    layout = scenario.layout
    rows = [(r.stage, fmt(layout.bottom_flow(r.edge_flows)), fmt(r.total_cost)) for r in history.records]
    print(_table(["stage", "bottom_flow", "total_cost"], rows))
    print(f"wrote {out / 'trace.jsonl'} and {out / 'trace.csv'} (config {digest})")
    return EXIT_OK


def cmd_verify(args) -> int:
    scenario = _load(args)
    checks = args.checks.split(",") if args.checks else list(CHECKS)
    for c in checks:
        if c not in CHECKS:
            raise ConfigError(f"unknown check {c!r}; expected some of {', '.join(CHECKS)}")
    family = DeviationFamily.for_scenario(scenario)
    reports = []
    if "ir" in checks:
        reports.append(check_individual_rationality(scenario, family, workers=args.workers))
    if "resilience" in checks:
        reports.append(check_resilience(scenario, family, workers=args.workers))
    if "optimality" in checks:
        reports.append(check_optimality(scenario))
    if "ncp" in checks:
        reports.append(check_no_collective_punishment_run(scenario))
    rows = []
    for r in reports:
        threshold = "-" if r.threshold is None else fmt(r.threshold)
        if r.witness is not None:
            witness = r.witness.describe()
        elif r.pareto is not None:
            witness = f"planner {r.pareto.planner + 1} moves to {fmt(r.pareto.fraction)}"
        else:
            witness = "-"
        rows.append((r.desideratum, r.verdict, threshold, witness))
    print(_table(["desideratum", "verdict", "lambda_0", "witness"], rows))
    for r in reports:
        for note in r.notes:
            print(f"note ({r.desideratum}): {note}")
    if args.out:
        text = report_jsonl(scenario, [r.to_record() for r in reports], config_hash(scenario), "verify")
        write_text(Path(args.out) / "verify.jsonl", text)
    return EXIT_OK if all(r.ok for r in reports) else EXIT_VIOLATION


def cmd_impossibility(args) -> int:
    scenario = _load(args)
    discount = parse_number(args.discount, scenario.mode) if args.discount else Fraction(99, 100)
    witness = find_profitable_defection(scenario, args.segments, discount, args.horizon)
    if witness is None:
        print("no profitable segment defection found")
        record = {"verdict": "pass-on-family", "witness": None}
    else:
        gap = replay_witness(scenario, witness)
        print(f"profitable defection: {witness.describe()}")
        print(f"baseline {float(witness.baseline):.6f}  defection {float(witness.deviation):.6f}  replayed gap {float(gap):.6f}")
        record = {"verdict": "violation", "witness": witness.to_record(), "replay_matches": gap == witness.gap}
    if args.out:
        write_text(Path(args.out) / "impossibility.jsonl", report_jsonl(scenario, [record], config_hash(scenario), "impossibility"))
    return EXIT_OK if witness is None else EXIT_VIOLATION


def _sweep_row(n: int, mode: str) -> dict:
    sol = solve_planner_equilibrium(Partition.equal(n, mode))
    F = sol.F
    if F > Fraction(3, 4):
        regime, N = "punishment", compute_punishment_length(F)
    elif F == Fraction(3, 4):
        regime, N = "edge_case", None
    else:
        regime, N = "impossible", None
    return {"planners": n, "F": fmt(F), "lambda": fmt(sol.lambdas[0]), "regime": regime, "N": "-" if N is None else N}


def cmd_sweep(args) -> int:
    if args.start < 1 or args.stop < args.start:
        raise ConfigError("sweep needs 1 <= --start <= --stop")
    mode = args.mode or RATIONAL
    rows = [_sweep_row(n, mode) for n in range(args.start, args.stop + 1)]
    columns = ["planners", "F", "lambda", "regime", "N"]
    print(_table(columns, [[r[c] for c in columns] for r in rows]))
    if args.out:
        meta = {"engine": "planroute", "version": __version__, "seed": 0, "sweep": f"planners {args.start}..{args.stop}"}
        write_text(Path(args.out) / "sweep.csv", rows_csv(rows, columns, meta))
    return EXIT_OK


# --- parser ------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planroute", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"planroute {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="scenario YAML file")
        p.add_argument("--mode", choices=MODES, help="number mode (overrides the config)")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("equilibrium", help="one-shot planner equilibrium")
    common(p, config_required=False)
    p.add_argument("--shares", help="comma-separated shares, e.g. 1/10,1/5,7/10")
    p.add_argument("--equal", type=int, help="number of equal planners")
    p.set_defaults(func=cmd_equilibrium)

    p = sub.add_parser("simulate", help="play the repeated game and write traces")
    common(p)
    p.add_argument("--horizon", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="check the four desiderata on the deviation family")
    common(p)
    p.add_argument("--horizon", type=int)
    p.add_argument("--discount", help="comma-separated discount grid")
    p.add_argument("--segments", type=int)
    p.add_argument("--checks", help=f"comma-separated subset of {','.join(CHECKS)}")
    p.add_argument("--workers", type=int, default=1, help="processes for the deviation family")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("impossibility", help="search segment defections when F < 3/4")
    common(p)
    p.add_argument("--horizon", type=int)
    p.add_argument("--discount", help="discount factor (default 99/100)")
    p.add_argument("--segments", type=int)
    p.set_defaults(func=cmd_impossibility)

    p = sub.add_parser("sweep", help="equilibrium summary for 1..n equal planners")
    p.add_argument("--param", choices=("planners",), default="planners")
    p.add_argument("--start", type=int, default=1)
    p.add_argument("--stop", type=int, default=6)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


run_cli = main
