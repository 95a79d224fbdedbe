"""Composition demos: a pipeline rerun by a condition task, and pipes that run task graphs."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..pipeline import Pipe, Pipeflow, Pipeline, PipeType
from ..runtime import Executor, TaskGraph
from ..trace import TraceLog, validate


class BatchSource:
    """Hands out items one at a time from a queue of fixed-size batches."""

    def __init__(self, batches: list[int]) -> None:
        self._batches = list(batches)
        self.remaining = 0

    def has_batch(self) -> bool:
        return bool(self._batches)

    def load(self) -> None:
        self.remaining = self._batches.pop(0)

    def take(self) -> bool:
        if self.remaining == 0:
            return False
        self.remaining -= 1
        return True


def replay_stop_predicate(batches: list[int]) -> list[int]:
    """Tokens admitted by each pipeline run, replayed without any scheduler.

    One batch is loaded before each run, so ``len(batches)`` runs happen (at
    least one); a run admits tokens until the source is empty.
    """
    src = BatchSource(batches)
    per_run = []
    while True:
        if src.has_batch():
            src.load()
        admitted = 0
        while src.take():
            admitted += 1
        per_run.append(admitted)
        if not src.has_batch():
            return per_run


@dataclass
class IterativeResult:
    num_lines: int
    run_starts: list[int] = field(default_factory=list)
    first_events: list[tuple[int, int] | None] = field(default_factory=list)
    total_tokens: int = 0
    expected_tokens: int = 0
    done_calls: int = 0
    trace_valid: bool = False
    trace: TraceLog | None = None

    @property
    def resumed_correctly(self) -> bool:
        for start, first in zip(self.run_starts, self.first_events):
            if first is not None and first != (start, start % self.num_lines):
                return False
        return True

    @property
    def ok(self) -> bool:
        return (
            self.total_tokens == self.expected_tokens
            and self.resumed_correctly
            and self.done_calls == 1
            and self.trace_valid
        )


def demo_iterative(
    lines: int = 4,
    batches: list[int] | None = None,
    threads: int = 4,
    types: str = "sps",
    executor: Executor | None = None,
) -> IterativeResult:
    """``init -> pipeline -> cond -> {pipeline, done}``; cond reruns while batches remain."""
    batches = [4, 4, 4] if batches is None else list(batches)
    src = BatchSource(batches)
    trace = TraceLog()
    result = IterativeResult(num_lines=lines)
    boundaries: list[int] = []

    def first(pf: Pipeflow) -> None:
        if not src.take():
            pf.stop()

    def rest(pf: Pipeflow) -> None:
        pass

    kinds = PipeType.parse(types)
    pl = Pipeline(lines, Pipe(kinds[0], first), *[Pipe(t, rest) for t in kinds[1:]], trace=trace)

    def mark_start() -> None:
        boundaries.append(trace.stamp())
        result.run_starts.append(pl.num_tokens)

    def init() -> None:
        if src.has_batch():
            src.load()
        mark_start()

    def cond() -> int:
        if src.has_batch():
            src.load()
            mark_start()
            return 0
        return 1

    def done() -> None:
        result.done_calls += 1

    tf = TaskGraph("iterative")
    init_t = tf.emplace(init)
    module = tf.composed_of(pl, name="pipeline")
    cond_t = tf.emplace_condition(cond, name="cond")
    done_t = tf.emplace(done)
    init_t.precede(module)
    module.precede(cond_t)
    cond_t.precede(module, done_t)

    ex = executor or Executor(threads)
    try:
        ex.run(tf).wait().raise_for_error()
    finally:
        if executor is None:
            ex.shutdown()

    result.total_tokens = pl.num_tokens
    result.expected_tokens = sum(replay_stop_predicate(batches))
    bounds = boundaries + [float("inf")]
    for lo, hi in zip(bounds, bounds[1:]):
        evs = [e for e in trace.events if lo < e.begin < hi]
        first_ev = min(evs, key=lambda e: e.begin) if evs else None
        result.first_events.append(None if first_ev is None else (first_ev.token, first_ev.line))
    result.trace_valid = validate(trace).passed
    result.trace = trace
    return result


def demo_embedded(lines: int = 4, tokens: int = 4, threads: int = 4, executor: Executor | None = None) -> list[str]:
    """Three serial pipes, each running its own small task graph per token.

    Returns the effect log; each stage graph appends ``"<stage>:<token>:<task>"``.
    """
    effects: list[str] = []
    current = [0] * 3
    stages: list[TaskGraph] = []
    for s in range(3):
        g = TaskGraph(f"stage-{s}")
        a = g.emplace(lambda s=s: effects.append(f"{s}:{current[s]}:a"))
        b = g.emplace(lambda s=s: effects.append(f"{s}:{current[s]}:b"))
        a.precede(b)
        stages.append(g)

    ex = executor or Executor(threads)

    def stage(pf: Pipeflow) -> None:
        if pf.pipe == 0 and pf.token == tokens:
            pf.stop()
            return
        current[pf.pipe] = pf.token
        ex.run(stages[pf.pipe]).wait().raise_for_error()

    pl = Pipeline(lines, *[Pipe(PipeType.SERIAL, stage) for _ in range(3)])
    tf = TaskGraph("embedded")
    init = tf.emplace(lambda: effects.append("init"))
    module = tf.composed_of(pl)
    stop = tf.emplace(lambda: effects.append("stop"))
    init.precede(module)
    module.precede(stop)
    try:
        ex.run(tf).wait().raise_for_error()
    finally:
        if executor is None:
            ex.shutdown()
    return effects
