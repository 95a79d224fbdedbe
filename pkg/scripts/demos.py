#!/usr/bin/env python3
"""Run the iterative rerun demo and the embedded task-graph demo, printing what happened."""

import argparse

from pipeweave.bench.demo import demo_embedded, demo_iterative


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lines", type=int, default=4)
    ap.add_argument("--batches", type=int, nargs="*", default=[5, 5, 5])
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    res = demo_iterative(lines=args.lines, batches=args.batches, threads=args.threads)
    print("iterative reruns")
    for i, (start, first) in enumerate(zip(res.run_starts, res.first_events)):
        print(f"  run {i}: starts at token {start}, first event (token, line) = {first}")
    print(f"  total tokens {res.total_tokens} (replay oracle {res.expected_tokens}), ok={res.ok}")

    effects = demo_embedded(lines=args.lines, tokens=4, threads=args.threads)
    print("embedded stage graphs")
    print("  " + " ".join(effects))


if __name__ == "__main__":
    main()
