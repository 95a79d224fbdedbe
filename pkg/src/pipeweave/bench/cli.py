"""``pipeweave-bench``: run pipeline workloads and emit CSV.

Examples::

    pipeweave-bench micro --lines 8 --types ssssssss --tokens 1024 --threads 4 --check
    pipeweave-bench graph --nodes 1000 --levels 50 --types ssssssss --threads 8 --runs 5
    pipeweave-bench place --rows 8 --cols 64 --threads 8 --output place.csv
    pipeweave-bench validate --trace run.trace --lines 4 --types sps --tokens 8
    pipeweave-bench demo-iterative --lines 4 --tokens 4 --reruns 3

Exit codes: 0 success, 1 validation failure, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import sys
from typing import Iterable, Sequence

from ..pipeline import PipeType
from ..trace import TraceFormatError, TraceLog, validate
from .workloads import CSV_COLUMNS, WORKLOADS, ResultRow, WorkloadSpec

EXIT_OK, EXIT_INVALID, EXIT_USAGE = 0, 1, 2


def emit_csv(rows: Iterable[ResultRow], path: str) -> None:
    """Write header plus one line per row; ``-`` means stdout. Raises OSError."""
    if path == "-":
        _write_csv(rows, sys.stdout)
        sys.stdout.flush()
        return
    with open(path, "w", newline="") as fh:
        _write_csv(rows, fh)


def _write_csv(rows: Iterable[ResultRow], fh) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow(row.as_tuple())


def _types(value: str) -> str:
    try:
        PipeType.parse(value)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not value or value[0].lower() != "s":
        raise argparse.ArgumentTypeError(f"first pipe must be serial ('s'), got {value!r}")
    return value.lower()


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return n


def _nonneg(value: str) -> int:
    n = int(value)
    if n < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return n


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--lines", type=_positive, default=8, help="parallel lines (default: 8)")
    common.add_argument("--types", type=_types, default="ssssssss", help="pipe types, e.g. spps (default: ssssssss)")
    common.add_argument("--tokens", type=_nonneg, default=1024, help="tokens to admit (default: 1024)")
    common.add_argument("--threads", type=_positive, default=4, help="executor workers (default: 4)")
    common.add_argument("--work-us", type=float, default=0.0, help="busy work per stage in microseconds")
    common.add_argument("--runs", type=_positive, default=1, help="repetitions (default: 1)")
    common.add_argument("--seed", type=int, default=1, help="RNG seed (default: 1)")
    common.add_argument("--output", default="-", help="CSV path, '-' for stdout")
    common.add_argument("--check", action="store_true", help="record and validate a trace of every run")
    common.add_argument("--trace", metavar="PATH", help="write the last run's trace (or read it, for validate)")

    parser = argparse.ArgumentParser(prog="pipeweave-bench", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("micro", parents=[common], help="synthetic stages with calibrated busy work")
    g = sub.add_parser("graph", parents=[common], help="levelized-graph propagation")
    g.add_argument("--nodes", type=_positive, default=1000)
    g.add_argument("--levels", type=_positive, default=50)
    g.add_argument("--matrix-dim", type=_positive, default=4)
    p = sub.add_parser("place", parents=[common], help="window reordering, one serial pipe per row")
    p.add_argument("--rows", type=_positive, default=8)
    p.add_argument("--cols", type=_positive, default=64)
    sub.add_parser("validate", parents=[common], help="validate a trace file offline")
    d = sub.add_parser("demo-iterative", parents=[common], help="pipeline rerun by a condition task")
    d.add_argument("--reruns", type=_nonneg, default=3, help="number of data batches (default: 3)")
    return parser


def _spec(args: argparse.Namespace) -> WorkloadSpec:
    extra = {}
    if args.command == "graph":
        extra = dict(nodes=args.nodes, levels=args.levels, matrix_dim=args.matrix_dim)
    elif args.command == "place":
        extra = dict(rows=args.rows, cols=args.cols)
    return WorkloadSpec(
        kind=args.command,
        lines=args.lines,
        types=args.types,
        tokens=args.tokens,
        threads=args.threads,
        work_us=args.work_us,
        runs=args.runs,
        seed=args.seed,
        check=args.check or bool(args.trace),
        **extra,
    )


def cmd_validate(args: argparse.Namespace) -> int:
    if not args.trace:
        print("validate: --trace PATH is required", file=sys.stderr)
        return EXIT_USAGE
    types = PipeType.parse(args.types)
    try:
        log = TraceLog.load(args.trace, args.lines, types, args.tokens)
    except (OSError, TraceFormatError) as exc:
        print(f"validate: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = validate(log)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_INVALID


def cmd_demo_iterative(args: argparse.Namespace) -> int:
    from .demo import demo_iterative

    res = demo_iterative(args.lines, [args.tokens] * args.reruns, args.threads, args.types)
    print(f"runs={len(res.run_starts)} starts={res.run_starts} first_events={res.first_events}")
    print(f"total_tokens={res.total_tokens} expected={res.expected_tokens} trace_valid={res.trace_valid}")
    print("PASS" if res.ok else "FAIL")
    return EXIT_OK if res.ok else EXIT_INVALID


def cmd_workload(args: argparse.Namespace) -> int:
    try:
        spec = _spec(args)
        outcome = WORKLOADS[args.command](spec, None)
    except ValueError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        emit_csv(outcome.rows, args.output)
        if args.trace and outcome.traces:
            outcome.traces[-1].dump(args.trace)
    except OSError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for key, value in outcome.extra.items():
        print(f"{key}={value}", file=sys.stderr)
    if spec.check and not outcome.valid:
        print(f"{args.command}: trace validation failed", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args)
    if args.command == "demo-iterative":
        return cmd_demo_iterative(args)
    return cmd_workload(args)


if __name__ == "__main__":
    sys.exit(main())
