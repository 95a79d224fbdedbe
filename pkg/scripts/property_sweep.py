#!/usr/bin/env python3
"""Exhaustive small-shape sweep: run every configuration and validate its trace."""

import argparse
import itertools
import sys

from pipeweave import Executor, Pipe, Pipeline, PipeType, TraceLog
from pipeweave.trace import check_against_simulation, dependency_simulator, validate


def pipeline(lines, types, tokens, trace):
    def first(pf):
        if pf.token == tokens:
            pf.stop()

    return Pipeline(lines, Pipe(types[0], first), *[Pipe(t, lambda pf: None) for t in types[1:]], trace=trace)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-lines", type=int, default=4)
    ap.add_argument("--max-pipes", type=int, default=4)
    ap.add_argument("--max-tokens", type=int, default=12)
    ap.add_argument("--workers", type=int, nargs="+", default=[1, 4])
    args = ap.parse_args()

    failures = runs = 0
    for w in args.workers:
        with Executor(w) as ex:
            for lines in range(1, args.max_lines + 1):
                for n in range(1, args.max_pipes + 1):
                    for rest in itertools.product([PipeType.SERIAL, PipeType.PARALLEL], repeat=n - 1):
                        types = [PipeType.SERIAL, *rest]
                        for tokens in range(args.max_tokens + 1):
                            log = TraceLog()
                            ex.run(pipeline(lines, types, tokens, log)).wait().raise_for_error()
                            sim = dependency_simulator(lines, n, types, tokens)
                            report = validate(log)
                            runs += 1
                            if not (report.passed and check_against_simulation(log, sim).passed):
                                failures += 1
                                shape = "".join(t.letter for t in types)
                                print(f"FAIL L={lines} types={shape} T={tokens} W={w}\n{report.summary()}")
    print(f"{runs} runs, {failures} failures")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
