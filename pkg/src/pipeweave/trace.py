"""Pipe-invocation traces and the checks run over them.

Every traced invocation takes two stamps from one global sequence, at entry
and at exit. Ordering claims are checked on those stamps, so "end of A
precedes begin of B" is exact rather than clock-dependent.
"""

from __future__ import annotations

import heapq
import io
import itertools
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import IO, Iterable, NamedTuple, Sequence

from .pipeline import PipeType

__all__ = [
    "DependencySimulation",
    "OverlapReport",
    "TraceEvent",
    "TraceFormatError",
    "TraceLog",
    "ValidationReport",
    "Violation",
    "check_against_simulation",
    "check_overlap_allowed",
    "dependency_simulator",
    "expected_events",
    "validate",
]


class TraceFormatError(ValueError):
    pass


class TraceEvent(NamedTuple):
    token: int
    line: int
    pipe: int
    begin: int
    end: int
    worker: int

    def format(self) -> str:
        return f"{self.token} {self.line} {self.pipe} {self.begin} {self.end} {self.worker}"


class TraceLog:
    """Append-only event log shared by all workers of a run."""

    def __init__(self, num_lines: int | None = None, types: Sequence[int] | None = None, num_tokens: int = 0) -> None:
        self.events: list[TraceEvent] = []
        # next() on itertools.count and list.append are single C calls; both
        # are atomic under the GIL
        self._seq = itertools.count()
        self.num_lines = num_lines
        self.types = [int(t) for t in types] if types is not None else None
        self.num_tokens = num_tokens

    def bind(self, num_lines: int, types: Sequence[int]) -> None:
        self.num_lines = num_lines
        self.types = [int(t) for t in types]

    @property
    def num_pipes(self) -> int:
        return len(self.types) if self.types is not None else 0

    def stamp(self) -> int:
        return next(self._seq)

    def record(self, token: int, line: int, pipe: int, begin: int, end: int, worker: int | None) -> None:
        self.events.append(TraceEvent(token, line, pipe, begin, end, -1 if worker is None else worker))

    def clear(self) -> None:
        self.events = []
        self.num_tokens = 0

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def dump(self, dest: str | os.PathLike | IO[str]) -> None:
        """Write ``token line pipe begin end worker`` lines."""
        if isinstance(dest, (str, os.PathLike)):
            with open(dest, "w") as fh:
                self.dump(fh)
            return
        for ev in self.events:
            dest.write(ev.format())
            dest.write("\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    @classmethod
    def load(
        cls,
        src: str | os.PathLike | IO[str],
        num_lines: int,
        types: Sequence[int],
        num_tokens: int,
    ) -> TraceLog:
        if isinstance(src, (str, os.PathLike)):
            with open(src) as fh:
                return cls.load(fh, num_lines, types, num_tokens)
        out = cls(num_lines, types, num_tokens)
        for lineno, raw in enumerate(src, 1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 6:
                raise TraceFormatError(f"line {lineno}: expected 6 fields, got {len(parts)}")
            try:
                values = [int(x) for x in parts]
            except ValueError:
                raise TraceFormatError(f"line {lineno}: non-integer field in {text!r}") from None
            if min(values[:5]) < 0:
                raise TraceFormatError(f"line {lineno}: negative field in {text!r}")
            out.events.append(TraceEvent(*values))
        return out


@dataclass(frozen=True)
class Violation:
    rule: str
    events: tuple[TraceEvent, ...]
    message: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}

    def summary(self, limit: int = 20) -> str:
        if self.passed:
            return "PASS: no violations"
        lines = [f"FAIL: {len(self.violations)} violation(s)"]
        lines += [f"  {v}" for v in self.violations[:limit]]
        if len(self.violations) > limit:
            lines.append(f"  ... {len(self.violations) - limit} more")
        return "\n".join(lines)


def expected_events(num_lines: int, num_pipes: int, num_tokens: int) -> set[tuple[int, int]]:
    """Every (token, pipe) pair a run admitting ``num_tokens`` tokens must produce."""
    return {(t, p) for t in range(num_tokens) for p in range(num_pipes)}


RULES = (
    "stamps",
    "exactly-once",
    "completeness",
    "unexpected",
    "pipe-order",
    "serial-order",
    "line-mapping",
    "line-disjoint",
)


def validate(log: TraceLog, num_tokens: int | None = None) -> ValidationReport:
    """Check a finished run's trace against the pipeline's ordering rules.

    In order: each (token, pipe) runs exactly once; every admitted token visits
    every pipe; pipes of one token run in order; serial pipes see tokens in
    order; tokens sit on line ``token % L``; invocations on one line never
    overlap.
    """
    if log.num_lines is None or log.types is None:
        raise ValueError("trace log has no pipeline shape; call bind() or load() with a shape")
    L = log.num_lines
    types = log.types
    P = len(types)
    T = log.num_tokens if num_tokens is None else num_tokens
    report = ValidationReport()
    add = report.violations.append

    for ev in log.events:
        if not ev.begin < ev.end:
            add(Violation("stamps", (ev,), f"event {ev.format()!r} does not begin before it ends"))

    seen: dict[tuple[int, int], TraceEvent] = {}
    counts = Counter((ev.token, ev.pipe) for ev in log.events)
    for ev in log.events:
        seen.setdefault((ev.token, ev.pipe), ev)
    for key, n in sorted(counts.items()):
        if n > 1:
            dups = tuple(e for e in log.events if (e.token, e.pipe) == key)
            add(Violation("exactly-once", dups, f"token {key[0]} ran pipe {key[1]} {n} times"))

    expected = expected_events(L, P, T)
    for key in sorted(expected - seen.keys()):
        add(Violation("completeness", (), f"token {key[0]} never ran pipe {key[1]}"))
    for key in sorted(seen.keys() - expected):
        add(Violation("unexpected", (seen[key],), f"token {key[0]} pipe {key[1]} outside the admitted {T} tokens x {P} pipes"))

    for (t, p), ev in sorted(seen.items()):
        if p + 1 < P:
            nxt = seen.get((t, p + 1))
            if nxt is not None and not ev.end < nxt.begin:
                add(Violation("pipe-order", (ev, nxt), f"token {t}: pipe {p + 1} began before pipe {p} ended"))
        if 0 <= p < P and types[p] == PipeType.SERIAL and t > 0:
            prev = seen.get((t - 1, p))
            if prev is not None and not prev.end < ev.begin:
                add(Violation("serial-order", (prev, ev), f"serial pipe {p}: token {t} began before token {t - 1} ended"))

    for ev in log.events:
        if ev.line != ev.token % L:
            add(Violation("line-mapping", (ev,), f"token {ev.token} ran on line {ev.line}, expected {ev.token % L}"))

    by_line: dict[int, list[TraceEvent]] = defaultdict(list)
    for ev in log.events:
        by_line[ev.line].append(ev)
    for line in sorted(by_line):
        evs = sorted(by_line[line], key=lambda e: e.begin)
        for a, b in zip(evs, evs[1:]):
            if not a.end < b.begin:
                add(Violation("line-disjoint", (a, b), f"line {line}: token {b.token} pipe {b.pipe} overlaps token {a.token} pipe {a.pipe}"))
    return report


@dataclass
class OverlapReport:
    violations: list[Violation]
    overlaps: dict[int, int]

    @property
    def passed(self) -> bool:
        return not self.violations


def _overlapping_pairs(events: Sequence[TraceEvent]) -> list[tuple[TraceEvent, TraceEvent]]:
    pairs = []
    active: list[tuple[int, int, TraceEvent]] = []
    for i, ev in enumerate(sorted(events, key=lambda e: e.begin)):
        while active and active[0][0] < ev.begin:
            heapq.heappop(active)
        for _, _, other in active:
            pairs.append((other, ev))
        heapq.heappush(active, (ev.end, i, ev))
    return pairs


def check_overlap_allowed(log: TraceLog, types: Sequence[int] | None = None) -> OverlapReport:
    """Serial pipes must never overlap themselves; parallel overlap is only counted.

    A run with no overlap at all (one worker) passes.
    """
    types = list(types) if types is not None else log.types
    if types is None:
        raise ValueError("pipe types unknown")
    per_pipe: dict[int, list[TraceEvent]] = defaultdict(list)
    for ev in log.events:
        per_pipe[ev.pipe].append(ev)
    violations: list[Violation] = []
    overlaps: dict[int, int] = {}
    for p in range(len(types)):
        pairs = _overlapping_pairs(per_pipe.get(p, []))
        overlaps[p] = len(pairs)
        if types[p] == PipeType.SERIAL:
            for a, b in pairs:
                violations.append(Violation("serial-overlap", (a, b), f"serial pipe {p}: tokens {a.token} and {b.token} overlap"))
    return OverlapReport(violations, overlaps)


@dataclass
class DependencySimulation:
    """Explicit token/pipe dependency DAG and one sequential execution of it."""

    num_lines: int
    types: list[int]
    num_tokens: int
    edges: dict[tuple[int, int], list[tuple[int, int]]]
    order: list[tuple[int, int]]
    feasible: bool
    first_round_counts: list[list[int | None]]


def dependency_simulator(num_lines: int, num_pipes: int, types: Sequence[int], num_tokens: int) -> DependencySimulation:
    """Build the stage-dependency DAG directly from pipe semantics.

    Token ``t`` at pipe ``p`` depends on ``(t, p-1)`` and, for a serial pipe,
    on ``(t-1, p)``. First-round counts are the in-degrees of the first token
    on each line, ``None`` for ``(0, 0)`` which has no predecessor.
    """
    types = [int(t) for t in types]
    if len(types) != num_pipes:
        raise ValueError("types must have one entry per pipe")
    span = max(num_tokens, num_lines)
    preds: dict[tuple[int, int], list[tuple[int, int]]] = {}
    for t in range(span):
        for p in range(num_pipes):
            ps = []
            if p > 0:
                ps.append((t, p - 1))
            if types[p] == PipeType.SERIAL and t > 0:
                ps.append((t - 1, p))
            preds[(t, p)] = ps

    counts: list[list[int | None]] = []
    for line in range(num_lines):
        counts.append([len(preds[(line, p)]) for p in range(num_pipes)])
    counts[0][0] = None

    sorter = TopologicalSorter({k: v for k, v in preds.items() if k[0] < num_tokens})
    try:
        order = list(sorter.static_order())
        feasible = True
    except CycleError:
        order, feasible = [], False
    return DependencySimulation(
        num_lines=num_lines,
        types=types,
        num_tokens=num_tokens,
        edges={k: v for k, v in preds.items() if k[0] < num_tokens},
        order=order,
        feasible=feasible,
        first_round_counts=counts,
    )


def check_against_simulation(log: TraceLog, sim: DependencySimulation) -> ValidationReport:
    """Every DAG edge ``u -> v`` must show as ``end(u) < begin(v)`` in the trace."""
    report = ValidationReport()
    seen = {(ev.token, ev.pipe): ev for ev in log.events}
    for node in sim.order:
        if node not in seen:
            report.violations.append(Violation("completeness", (), f"token {node[0]} never ran pipe {node[1]}"))
    for v, us in sim.edges.items():
        ev = seen.get(v)
        if ev is None:
            continue
        for u in us:
            eu = seen.get(u)
            if eu is not None and not eu.end < ev.begin:
                report.violations.append(
                    Violation("dependency", (eu, ev), f"({v[0]}, {v[1]}) began before its predecessor ({u[0]}, {u[1]}) ended")
                )
    return report


def events_by_line(events: Iterable[TraceEvent]) -> dict[int, list[TraceEvent]]:
    out: dict[int, list[TraceEvent]] = defaultdict(list)
    for ev in sorted(events, key=lambda e: e.begin):
        out[ev.line].append(ev)
    return dict(out)
