"""Operator entry points: validate-run, status, resume, bench, ladder.

Run directories resolve against the workspace root (SLOTBENCH_WORKSPACE or
the current directory) under validate-paper/<run-name>/ unless an explicit
path is given. Exit code is a pure function of the artifact and technical
axes; scientific outcomes never affect it.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import pipeline
from .control import get_status, load_state
from .errors import SlotbenchError
from .policy import RunPolicy

WORKSPACE_ENV = "SLOTBENCH_WORKSPACE"


def resolve_run_directory(name_or_path: str) -> Path:
    """A bare run name lands under <workspace>/validate-paper/<name>."""
    candidate = Path(name_or_path)
    if candidate.is_absolute() or os.sep in name_or_path or candidate.exists():
        return candidate
    workspace = Path(os.environ.get(WORKSPACE_ENV, "."))
    return workspace / "validate-paper" / name_or_path


def _load_policy(args) -> RunPolicy:
    if getattr(args, "policy", None):
        return RunPolicy.load(Path(args.policy))
    return RunPolicy()


def cmd_validate_run(args) -> int:
    run_dir = resolve_run_directory(args.run_directory)
    try:
        outcome = pipeline.start_run(
            run_dir,
            Path(args.paper_spec),
            mode=args.mode.replace("-", "_"),
            seed=args.seed,
            policy=_load_policy(args),
        )
    except SlotbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print_summary(outcome)
    return outcome.exit_code


def cmd_status(args) -> int:
    run_dir = resolve_run_directory(args.run_directory)
    try:
        state = load_state(run_dir)
    except SlotbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    snapshot = get_status(state)
    print(f"run {snapshot['run_id']} [{snapshot['mode']}]")
    print(f"current phase: {snapshot['current_phase'] or '(complete)'}")
    for phase, record in snapshot["phases"].items():
        line = f"  {phase}: {record['status']}"
        if record["retries_used"]:
            line += f" (retries {record['retries_used']})"
        if record["blocker"]:
            line += f" blocker={record['blocker']}"
        print(line)
    axes = snapshot["axes"]
    print(
        f"axes: artifact={axes['artifact']} technical={axes['technical']} "
        f"scientific={axes['scientific']}"
    )
    return 0


def cmd_resume(args) -> int:
    run_dir = resolve_run_directory(args.run_directory)
    try:
        outcome = pipeline.resume_run(run_dir)
    except SlotbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _print_summary(outcome)
    return outcome.exit_code


def cmd_bench(args) -> int:
    run_dir = resolve_run_directory(args.run_directory)
    try:
        row = pipeline.bench_run(run_dir, args.baseline)
    except SlotbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    columns = row["columns"]
    header = f"{row['run_name']} ({row['dataset']}, {row['metric']}, {row['grain']}-grain)"
    print(header)
    for name in columns:
        cell = columns[name]
        print(f"  {name}: {cell['display']} (rank {cell['rank']})")
    return 0


def cmd_ladder(args) -> int:
    run_dir = resolve_run_directory(args.run_directory)
    try:
        verdict = pipeline.ladder_once(run_dir)
    except SlotbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"verdict: {verdict.value}")
    return 0 if verdict.value in ("PASS", "WARN_CONTINUE") else 1


def _print_summary(outcome: pipeline.RunOutcome) -> None:
    snapshot = get_status(outcome.state)
    axes = snapshot["axes"]
    print(
        f"run {snapshot['run_id']}: artifact={axes['artifact']} "
        f"technical={axes['technical']} scientific={axes['scientific']}"
    )
    if outcome.blocker:
        print(f"blocker: {outcome.blocker}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slotbench",
        description="Validated, benchmark-comparable experiment runs from "
        "declarative slot bindings.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-run", help="run the staged workflow end to end")
    p.add_argument("run_directory", help="run directory or bare run name")
    p.add_argument("--paper-spec", required=True, help="paper-spec document (JSON/YAML)")
    p.add_argument(
        "--mode",
        choices=["blueprint-only", "quick", "full"],
        default="full",
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", help="policy document overriding defaults")
    p.set_defaults(fn=cmd_validate_run)

    p = sub.add_parser("status", help="print the state machine view")
    p.add_argument("run_directory")
    p.set_defaults(fn=cmd_status)

    p = sub.add_parser("resume", help="reconcile from artifacts and continue")
    p.add_argument("run_directory")
    p.set_defaults(fn=cmd_resume)

    p = sub.add_parser("bench", help="benchmark swap against a baseline model")
    p.add_argument("run_directory")
    p.add_argument("--baseline", required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("ladder", help="run the sanity ladder once")
    p.add_argument("run_directory")
    p.set_defaults(fn=cmd_ladder)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
