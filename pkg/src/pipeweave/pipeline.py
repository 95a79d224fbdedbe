"""Task-parallel pipeline scheduling without a data abstraction.

A pipeline of ``L`` lines and ``P`` pipes runs as a tiny task graph: one
condition task that picks the line of the next token, plus one runtime task
per line. Each runtime task carries a scheduling token through the pipes and
uses a matrix of atomic join counters to decide, after every pipe, whether to
continue on its own line, hop to the next line, or hand the next line to
another worker.

Applications own their data. :attr:`Pipeflow.line` is the index into
per-line buffers.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any, Callable, Sequence

from .runtime import SchedulerHandle, Task, TaskGraph, current_worker

if TYPE_CHECKING:
    from .trace import TraceLog

__all__ = [
    "JoinCounterMatrix",
    "Pipe",
    "PipeType",
    "Pipeflow",
    "Pipeline",
    "PipelineError",
    "ScalablePipeline",
    "initial_join_counters",
]


class PipelineError(RuntimeError):
    pass


class PipeType(enum.IntEnum):
    """Pipe types double as the join-counter reset value of their column."""

    SERIAL = 2
    PARALLEL = 1

    @classmethod
    def parse(cls, types: str) -> list[PipeType]:
        """``"spps"`` -> ``[SERIAL, PARALLEL, PARALLEL, SERIAL]``."""
        table = {"s": cls.SERIAL, "p": cls.PARALLEL}
        try:
            return [table[c] for c in types.lower()]
        except KeyError as exc:
            raise ValueError(f"invalid pipe type {exc.args[0]!r} in {types!r}; use 's' or 'p'") from None

    @property
    def letter(self) -> str:
        return "s" if self is PipeType.SERIAL else "p"


@dataclass(frozen=True)
class Pipe:
    type: PipeType
    callable: Callable[[Pipeflow], Any]


class Pipeflow:
    """Scheduling token handed to pipe callables, one per line."""

    __slots__ = ("_line", "_pipe", "_token", "_stop")

    def __init__(self, line: int) -> None:
        self._line = line
        self._pipe = 0
        self._token = 0
        self._stop = False

    @property
    def line(self) -> int:
        return self._line

    @property
    def pipe(self) -> int:
        return self._pipe

    @property
    def token(self) -> int:
        return self._token

    @property
    def stop_requested(self) -> bool:
        return self._stop

    def stop(self) -> None:
        """Stop admitting tokens. Only legal in the first pipe.

        The current token is dropped; tokens already in flight on other lines
        run to completion.
        """
        if self._pipe != 0:
            raise PipelineError(f"stop() called from pipe {self._pipe}; only the first pipe may stop")
        self._stop = True

    def __repr__(self) -> str:
        return f"Pipeflow(line={self._line}, pipe={self._pipe}, token={self._token})"


def initial_join_counters(num_lines: int, types: Sequence[int]) -> list[list[int]]:
    """Join counters before the first token enters.

    Each cell counts the predecessors the first token on that line really has:
    the previous pipe on the same line, plus the previous line in a serial
    column. Cell (0, 0) is never consulted because the condition task launches
    line 0 directly; it holds the first pipe's type value.
    """
    rows = [
        [(1 if p > 0 else 0) + (1 if t == PipeType.SERIAL and line > 0 else 0) for p, t in enumerate(types)]
        for line in range(num_lines)
    ]
    rows[0][0] = int(types[0])
    return rows


class JoinCounterMatrix:
    """``L x P`` atomic counters guarded by one lock."""

    def __init__(self, num_lines: int, num_pipes: int) -> None:
        self.num_lines = num_lines
        self.num_pipes = num_pipes
        self._cells = [0] * (num_lines * num_pipes)
        self._lock = threading.Lock()
        self.underflows = 0

    def load(self, rows: Sequence[Sequence[int]]) -> None:
        with self._lock:
            self._cells = [int(v) for row in rows for v in row]

    def get(self, line: int, pipe: int) -> int:
        return self._cells[line * self.num_pipes + pipe]

    def rows(self) -> list[list[int]]:
        P = self.num_pipes
        cells = list(self._cells)
        return [cells[i * P : (i + 1) * P] for i in range(self.num_lines)]

    def store(self, line: int, pipe: int, value: int) -> None:
        with self._lock:
            self._cells[line * self.num_pipes + pipe] = value

    def decrement(self, line: int, pipe: int) -> int:
        i = line * self.num_pipes + pipe
        with self._lock:
            value = self._cells[i] - 1
            self._cells[i] = value
        if value < 0:
            self.underflows += 1
        return value


class RecordingJoinCounterMatrix(JoinCounterMatrix):
    """Debug variant: logs every store/decrement and asserts on underflow."""

    def __init__(self, num_lines: int, num_pipes: int) -> None:
        super().__init__(num_lines, num_pipes)
        self.ops: list[tuple[str, int, int, int]] = []

    def store(self, line: int, pipe: int, value: int) -> None:
        with self._lock:
            self._cells[line * self.num_pipes + pipe] = value
            self.ops.append(("store", line, pipe, value))

    def decrement(self, line: int, pipe: int) -> int:
        i = line * self.num_pipes + pipe
        with self._lock:
            value = self._cells[i] - 1
            self._cells[i] = value
            self.ops.append(("dec", line, pipe, value))
        if value < 0:
            self.underflows += 1
            raise AssertionError(f"join counter ({line}, {pipe}) decremented below zero")
        return value


class _PipelineBase:
    def __init__(self, num_lines: int, pipes: Sequence[Pipe], *, trace: TraceLog | None, debug: bool, name: str) -> None:
        if num_lines < 1:
            raise ValueError("a pipeline needs at least one line")
        self._num_lines = num_lines
        self._trace = trace
        self._debug = debug
        self._num_tokens = 0
        self._pipeflows = [Pipeflow(line) for line in range(num_lines)]
        self._bind(pipes)
        self._graph = TaskGraph(name)
        self._tasks = self._build_task_graph()

    # -- construction -----------------------------------------------------

    def _bind(self, pipes: Sequence[Pipe]) -> None:
        pipes = tuple(pipes)
        if not pipes:
            raise PipelineError("a pipeline needs at least one pipe")
        if pipes[0].type != PipeType.SERIAL:
            raise PipelineError("the first pipe must be SERIAL")
        for p in pipes:
            if not isinstance(p, Pipe):
                raise TypeError(f"expected Pipe, got {type(p).__name__}")
        self._pipes = pipes
        self._types = [int(p.type) for p in pipes]
        cls = RecordingJoinCounterMatrix if self._debug else JoinCounterMatrix
        self._jcs = cls(self._num_lines, len(pipes))
        self._jcs.load(initial_join_counters(self._num_lines, self._types))
        self._callables = [p.callable for p in pipes]
        if self._trace is not None:
            self._trace.bind(self._num_lines, self._types)
            self._callables = [self._traced(fn) for fn in self._callables]

    def _traced(self, fn: Callable[[Pipeflow], Any]) -> Callable[[Pipeflow], Any]:
        trace = self._trace
        stamp = trace.stamp
        record = trace.record

        def invoke(pf: Pipeflow) -> None:
            begin = stamp()
            fn(pf)
            end = stamp()
            if pf._stop:
                return
            record(pf._token, pf._line, pf._pipe, begin, end, current_worker())
            if pf._pipe == 0:
                trace.num_tokens = pf._token + 1

        return invoke

    def _build_task_graph(self) -> list[Task]:
        g = self._graph
        cond = g.emplace_condition(self._first_line, name="cond")
        tasks = [cond]
        for line in range(self._num_lines):
            rt = g.emplace_runtime(self._make_line_task(line), name=f"rt-{line}")
            cond.precede(rt)
            tasks.append(rt)
        return tasks

    def _make_line_task(self, line: int) -> Callable[[SchedulerHandle], None]:
        def run_line(rt: SchedulerHandle) -> None:
            self._on_line(line, rt)

        return run_line

    def _first_line(self) -> int:
        return self._num_tokens % self._num_lines

    # -- scheduling -------------------------------------------------------

    def _on_line(self, line: int, rt: SchedulerHandle) -> None:
        pipeflows = self._pipeflows
        pf = pipeflows[line]
        L = self._num_lines
        P = len(self._types)
        types = self._types
        fns = self._callables
        tasks = self._tasks
        store = self._jcs.store
        dec = self._jcs.decrement
        serial = PipeType.SERIAL.value
        while True:
            if rt.cancelled:
                return
            cur_line = pf._line
            cur_pipe = pf._pipe
            store(cur_line, cur_pipe, types[cur_pipe])
            if cur_pipe == 0:
                pf._token = self._num_tokens
                pf._stop = False
                fns[0](pf)
                if pf._stop:
                    return
                self._num_tokens += 1
            else:
                fns[cur_pipe](pf)

            next_pipe = (cur_pipe + 1) % P
            next_line = (cur_line + 1) % L
            pf._pipe = next_pipe
            down = types[cur_pipe] == serial and dec(next_line, cur_pipe) == 0
            right = dec(cur_line, next_pipe) == 0
            if down:
                if right:
                    # keep this token on the current worker; hand the next line off
                    rt.schedule(tasks[next_line + 1])
                else:
                    pf = pipeflows[next_line]
            elif not right:
                return

    # -- public API -------------------------------------------------------

    @property
    def task_graph(self) -> TaskGraph:
        return self._graph

    @property
    def num_lines(self) -> int:
        return self._num_lines

    @property
    def num_pipes(self) -> int:
        return len(self._pipes)

    @property
    def pipe_types(self) -> list[PipeType]:
        return [PipeType(t) for t in self._types]

    @property
    def num_tokens(self) -> int:
        """Tokens admitted so far; persists across reruns until :meth:`reset`."""
        return self._num_tokens

    @property
    def join_counters(self) -> JoinCounterMatrix:
        return self._jcs

    @property
    def pipeflows(self) -> tuple[Pipeflow, ...]:
        return tuple(self._pipeflows)

    @property
    def trace(self) -> TraceLog | None:
        return self._trace

    def _check_idle(self) -> None:
        if self._graph.is_running:
            raise PipelineError("cannot reset a running pipeline")

    def _clear_state(self) -> None:
        self._num_tokens = 0
        for pf in self._pipeflows:
            pf._pipe = 0
            pf._token = 0
            pf._stop = False
        self._jcs.load(initial_join_counters(self._num_lines, self._types))
        if self._trace is not None:
            self._trace.num_tokens = 0

    def __repr__(self) -> str:
        types = "".join(PipeType(t).letter for t in self._types)
        return f"{type(self).__name__}(lines={self._num_lines}, pipes={types!r}, tokens={self._num_tokens})"


class Pipeline(_PipelineBase):
    """Pipeline with a fixed sequence of pipes.

    >>> pl = Pipeline(4, Pipe(PipeType.SERIAL, first), Pipe(PipeType.PARALLEL, second))
    >>> taskflow.composed_of(pl)

    Pass a :class:`~pipeweave.trace.TraceLog` as ``trace`` to record one event
    per pipe invocation. ``debug=True`` logs every join-counter operation and
    turns a counter underflow into an assertion.
    """

    def __init__(
        self,
        num_lines: int,
        *pipes: Pipe,
        trace: TraceLog | None = None,
        debug: bool = False,
        name: str = "pipeline",
    ) -> None:
        super().__init__(num_lines, pipes, trace=trace, debug=debug, name=name)

    def reset(self) -> None:
        """Zero the token count and restore first-round join counters."""
        self._check_idle()
        self._clear_state()


class ScalablePipeline(_PipelineBase):
    """Pipeline whose pipes come from a sequence that can be swapped between runs."""

    def __init__(
        self,
        num_lines: int,
        pipes: Sequence[Pipe],
        *,
        trace: TraceLog | None = None,
        debug: bool = False,
        name: str = "scalable-pipeline",
    ) -> None:
        super().__init__(num_lines, pipes, trace=trace, debug=debug, name=name)

    def reset(self, pipes: Sequence[Pipe] | None = None) -> None:
        """Re-point the pipe range (if given), zero tokens and restore counters."""
        self._check_idle()
        if pipes is not None:
            self._bind(pipes)
        self._clear_state()


def as_module(graph: TaskGraph, pipeline: _PipelineBase, name: str | None = None) -> Task:
    return graph.composed_of(pipeline, name=name)
