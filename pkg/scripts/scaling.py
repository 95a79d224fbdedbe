#!/usr/bin/env python3
"""Wall time of the spinning micro pipeline across worker counts.

Prints one CSV row per (workers, run) and a short summary comparing each
mean against the ideal pipelined and the fully sequential bounds.
"""

import argparse
import statistics
import sys

from pipeweave.bench.cli import emit_csv
from pipeweave.bench.spin import iterations_per_us
from pipeweave.bench.workloads import WorkloadSpec, run_micro


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--stages", type=int, default=8)
    ap.add_argument("--lines", type=int, default=8)
    ap.add_argument("--tokens", type=int, default=64)
    ap.add_argument("--work-us", type=float, default=2000.0)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--runs", type=int, default=3)
    ap.add_argument("--output", default="-")
    args = ap.parse_args()

    iterations_per_us()
    rows = []
    for w in args.workers:
        spec = WorkloadSpec("micro", lines=args.lines, types="s" * args.stages, tokens=args.tokens,
                            threads=w, work_us=args.work_us, runs=args.runs)
        rows.extend(run_micro(spec).rows)
    emit_csv(rows, args.output)

    ideal = (args.stages + args.tokens - 1) * args.work_us / 1000
    sequential = args.stages * args.tokens * args.work_us / 1000
    print(f"ideal {ideal:.0f} ms, sequential {sequential:.0f} ms", file=sys.stderr)
    for w in args.workers:
        mean = statistics.mean(r.wall_ns for r in rows if r.threads == w) / 1e6
        print(f"workers={w}: {mean:.0f} ms ({sequential / mean:.2f}x over sequential)", file=sys.stderr)


if __name__ == "__main__":
    main()
