"""Benchmark workloads: synthetic stages, levelized-graph propagation, window reordering."""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from ..pipeline import Pipe, Pipeflow, Pipeline, PipeType
from ..runtime import Executor
from ..trace import TraceLog, validate
from .spin import busy_work

CSV_COLUMNS = ("workload", "lines", "pipes", "tokens", "threads", "run", "wall_ns", "tokens_done", "valid", "metric")


@dataclass
class WorkloadSpec:
    kind: str
    lines: int = 8
    types: str = "ssssssss"
    tokens: int = 1024
    threads: int = 4
    work_us: float = 0.0
    runs: int = 1
    seed: int = 1
    check: bool = False
    # graph
    nodes: int = 1000
    levels: int = 50
    matrix_dim: int = 4
    # place
    rows: int = 8
    cols: int = 64

    def __post_init__(self) -> None:
        self.types = self.types.lower()
        if not self.types or self.types[0] != "s":
            raise ValueError(f"pipe types must start with 's', got {self.types!r}")
        PipeType.parse(self.types)
        if self.lines < 1:
            raise ValueError("lines must be >= 1")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.tokens < 0:
            raise ValueError("tokens must be >= 0")

    @property
    def pipe_types(self) -> list[PipeType]:
        return PipeType.parse(self.types)


@dataclass
class ResultRow:
    workload: str
    lines: int
    pipes: int
    tokens: int
    threads: int
    run: int
    wall_ns: int
    tokens_done: int
    valid: str = ""
    metric: str = ""

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f.name) for f in fields(self))


assert tuple(f.name for f in fields(ResultRow)) == CSV_COLUMNS


@dataclass
class RunOutcome:
    rows: list[ResultRow] = field(default_factory=list)
    traces: list[TraceLog] = field(default_factory=list)
    extra: dict[str, str] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return all(r.valid != "0" for r in self.rows)


def _validity(trace: TraceLog | None) -> str:
    if trace is None:
        return ""
    return "1" if validate(trace).passed else "0"


def _timed_run(ex: Executor, pl: Pipeline) -> int:
    t0 = time.perf_counter_ns()
    ex.run(pl).wait().raise_for_error()
    return time.perf_counter_ns() - t0


# -- micro ----------------------------------------------------------------


def micro_pipeline(lines: int, types: list[PipeType], tokens: int, work_us: float, trace: TraceLog | None = None) -> Pipeline:
    """Every pipe spins ``work_us`` microseconds; the first stops at ``tokens``."""

    def first(pf: Pipeflow) -> None:
        if pf.token == tokens:
            pf.stop()
            return
        busy_work(work_us)

    def stage(pf: Pipeflow) -> None:
        busy_work(work_us)

    pipes = [Pipe(types[0], first)] + [Pipe(t, stage) for t in types[1:]]
    return Pipeline(lines, *pipes, trace=trace)


def run_micro(spec: WorkloadSpec, executor: Executor | None = None) -> RunOutcome:
    out = RunOutcome()
    types = spec.pipe_types
    ex = executor or Executor(spec.threads)
    try:
        for run in range(spec.runs):
            trace = TraceLog() if spec.check else None
            pl = micro_pipeline(spec.lines, types, spec.tokens, spec.work_us, trace)
            wall = _timed_run(ex, pl)
            out.rows.append(
                ResultRow("micro", spec.lines, len(types), spec.tokens, spec.threads, run, wall, pl.num_tokens, _validity(trace))
            )
            if trace is not None:
                out.traces.append(trace)
    finally:
        if executor is None:
            ex.shutdown()
    return out


# -- levelized graph propagation -------------------------------------------


@dataclass
class LevelizedGraph:
    """DAG whose nodes are numbered in level order; edges join consecutive levels."""

    levels: list[list[int]]
    fanin: list[list[int]]
    states: np.ndarray

    @property
    def num_nodes(self) -> int:
        return len(self.fanin)

    def level_of(self) -> list[int]:
        out = [0] * self.num_nodes
        for k, nodes in enumerate(self.levels):
            for v in nodes:
                out[v] = k
        return out

    @classmethod
    def generate(cls, nodes: int, levels: int, matrix_dim: int, seed: int) -> LevelizedGraph:
        if not nodes >= levels >= 1:
            raise ValueError("need nodes >= levels >= 1")
        rng = np.random.default_rng(seed)
        sizes = 1 + rng.multinomial(nodes - levels, np.full(levels, 1.0 / levels))
        level_list: list[list[int]] = []
        start = 0
        for size in sizes:
            level_list.append(list(range(start, start + int(size))))
            start += int(size)
        fanin: list[list[int]] = [[] for _ in range(nodes)]
        for k in range(1, levels):
            prev = level_list[k - 1]
            for v in level_list[k]:
                degree = int(rng.integers(1, 4))
                picks = rng.choice(len(prev), size=min(degree, len(prev)), replace=False)
                fanin[v] = sorted(prev[i] for i in picks)
        states = rng.uniform(-1.0, 1.0, size=(nodes, matrix_dim, matrix_dim))
        return cls(level_list, fanin, states)


class GraphPropagation:
    """Per-stage delay-style update: ``out[p][v] = tanh((in + sum of fan-in outputs) @ M_p)``.

    Stage ``p`` of node ``v`` reads only stage-``p`` outputs of its fan-in,
    which serial stages finish in token order, so results do not depend on
    the number of threads.
    """

    def __init__(self, graph: LevelizedGraph, num_stages: int, seed: int) -> None:
        self.graph = graph
        n, d, _ = graph.states.shape
        rng = np.random.default_rng(seed + 7919)
        self.stage_matrices = rng.uniform(-1.0, 1.0, size=(num_stages, d, d)) / d
        self.out = np.zeros((num_stages, n, d, d))

    def stage(self, p: int, v: int) -> None:
        acc = self.graph.states[v].copy() if p == 0 else self.out[p - 1, v].copy()
        out_p = self.out[p]
        for u in self.graph.fanin[v]:
            acc += out_p[u]
        out_p[v] = np.tanh(acc @ self.stage_matrices[p])

    def checksum(self) -> float:
        return float(self.out[-1].sum())

    def pipeline(self, lines: int, trace: TraceLog | None = None) -> Pipeline:
        n = self.graph.num_nodes
        stage = self.stage

        def first(pf: Pipeflow) -> None:
            if pf.token == n:
                pf.stop()
                return
            stage(0, pf.token)

        def later(pf: Pipeflow) -> None:
            stage(pf.pipe, pf.token)

        P = self.stage_matrices.shape[0]
        pipes = [Pipe(PipeType.SERIAL, first)] + [Pipe(PipeType.SERIAL, later) for _ in range(P - 1)]
        return Pipeline(lines, *pipes, trace=trace)

    def run_sequential(self) -> float:
        for v in range(self.graph.num_nodes):
            for p in range(self.stage_matrices.shape[0]):
                self.stage(p, v)
        return self.checksum()


def graph_sequential_checksum(spec: WorkloadSpec) -> float:
    g = LevelizedGraph.generate(spec.nodes, spec.levels, spec.matrix_dim, spec.seed)
    return GraphPropagation(g, len(spec.types), spec.seed).run_sequential()


def run_graph(spec: WorkloadSpec, executor: Executor | None = None) -> RunOutcome:
    if "p" in spec.types:
        raise ValueError("graph workload stages must all be serial")
    out = RunOutcome()
    P = len(spec.types)
    ex = executor or Executor(spec.threads)
    try:
        for run in range(spec.runs):
            g = LevelizedGraph.generate(spec.nodes, spec.levels, spec.matrix_dim, spec.seed)
            prop = GraphPropagation(g, P, spec.seed)
            trace = TraceLog() if spec.check else None
            pl = prop.pipeline(spec.lines, trace)
            wall = _timed_run(ex, pl)
            out.rows.append(
                ResultRow("graph", spec.lines, P, spec.nodes, spec.threads, run, wall, pl.num_tokens,
                          _validity(trace), repr(prop.checksum()))
            )
            if trace is not None:
                out.traces.append(trace)
    finally:
        if executor is None:
            ex.shutdown()
    return out


# -- window reordering ------------------------------------------------------

WINDOW = 4


@dataclass
class PlacementGrid:
    """``rows x cols`` windows of four unit-width cells; nets are two-pin.

    Horizontal nets join a window to itself or its right neighbour in the same
    row; vertical nets join the same window column in adjacent rows.
    """

    rows: int
    cols: int
    slot_cell: list[list[int]]
    cell_x: list[int]
    cell_y: list[int]
    nets: list[tuple[int, int]]
    partners: list[list[int]]

    @classmethod
    def generate(cls, rows: int, cols: int, seed: int, nets_per_window: int = 2) -> PlacementGrid:
        if rows < 1 or cols < 1:
            raise ValueError("need rows >= 1 and cols >= 1")
        rng = np.random.default_rng(seed)
        width = WINDOW * cols
        slot_cell: list[list[int]] = []
        cell_x = [0] * (rows * width)
        cell_y = [0] * (rows * width)
        for r in range(rows):
            cells = [r * width + int(k) for k in rng.permutation(width)]
            slot_cell.append(cells)
            for s, cell in enumerate(cells):
                cell_x[cell] = s
                cell_y[cell] = r
        nets: list[tuple[int, int]] = []
        for r in range(rows):
            for c in range(cols):
                here = slot_cell[r][WINDOW * c : WINDOW * (c + 1)]
                for _ in range(nets_per_window):
                    a = here[int(rng.integers(WINDOW))]
                    c2 = min(c + int(rng.integers(2)), cols - 1)
                    b = slot_cell[r][WINDOW * c2 + int(rng.integers(WINDOW))]
                    if a != b:
                        nets.append((a, b))
                if r + 1 < rows:
                    below = slot_cell[r + 1][WINDOW * c : WINDOW * (c + 1)]
                    for _ in range(nets_per_window):
                        nets.append((here[int(rng.integers(WINDOW))], below[int(rng.integers(WINDOW))]))
        partners: list[list[int]] = [[] for _ in range(rows * width)]
        for a, b in nets:
            partners[a].append(b)
            partners[b].append(a)
        return cls(rows, cols, slot_cell, cell_x, cell_y, nets, partners)

    def wirelength(self) -> int:
        x, y = self.cell_x, self.cell_y
        return sum(abs(x[a] - x[b]) + abs(y[a] - y[b]) for a, b in self.nets)

    def window_cost(self, placement: dict[int, int]) -> int:
        """Wirelength of nets touching the cells in ``placement`` (cell -> slot)."""
        x, y, partners = self.cell_x, self.cell_y, self.partners
        cost = 0
        for cell, slot in placement.items():
            for other in partners[cell]:
                if other in placement:
                    if cell < other:
                        cost += abs(slot - placement[other])
                else:
                    cost += abs(slot - x[other]) + abs(y[cell] - y[other])
        return cost

    def reorder_window(self, row: int, col: int) -> bool:
        """Try all 24 orders of one window and keep the cheapest.

        Cells outside the window stay where they are. Ties keep the current
        order. Returns True if the window changed.
        """
        lo = WINDOW * col
        slots = range(lo, lo + WINDOW)
        current = self.slot_cell[row][lo : lo + WINDOW]
        best_cost = None
        best = current
        for perm in itertools.permutations(current):
            cost = self.window_cost(dict(zip(perm, slots)))
            if best_cost is None or cost < best_cost:
                best_cost, best = cost, list(perm)
        if best == current:
            return False
        self.slot_cell[row][lo : lo + WINDOW] = best
        for s, cell in zip(slots, best):
            self.cell_x[cell] = s
        return True

    def run_sequential(self) -> int:
        for r in range(self.rows):
            for c in range(self.cols):
                self.reorder_window(r, c)
        return self.wirelength()

    def pipeline(self, lines: int, trace: TraceLog | None = None) -> Pipeline:
        """One serial pipe per row; tokens sweep window columns left to right."""
        cols = self.cols
        reorder = self.reorder_window

        def first(pf: Pipeflow) -> None:
            if pf.token == cols:
                pf.stop()
                return
            reorder(0, pf.token)

        def row_stage(pf: Pipeflow) -> None:
            reorder(pf.pipe, pf.token)

        pipes = [Pipe(PipeType.SERIAL, first)] + [Pipe(PipeType.SERIAL, row_stage) for _ in range(self.rows - 1)]
        return Pipeline(lines, *pipes, trace=trace)


def place_sequential_wirelength(spec: WorkloadSpec) -> int:
    return PlacementGrid.generate(spec.rows, spec.cols, spec.seed).run_sequential()


def run_place(spec: WorkloadSpec, executor: Executor | None = None) -> RunOutcome:
    out = RunOutcome()
    ex = executor or Executor(spec.threads)
    try:
        for run in range(spec.runs):
            grid = PlacementGrid.generate(spec.rows, spec.cols, spec.seed)
            initial = grid.wirelength()
            trace = TraceLog() if spec.check else None
            pl = grid.pipeline(spec.lines, trace)
            wall = _timed_run(ex, pl)
            final = grid.wirelength()
            out.rows.append(
                ResultRow("place", spec.lines, spec.rows, spec.cols, spec.threads, run, wall, pl.num_tokens,
                          _validity(trace), str(final))
            )
            out.extra["initial_wirelength"] = str(initial)
            out.extra["final_wirelength"] = str(final)
            if trace is not None:
                out.traces.append(trace)
    finally:
        if executor is None:
            ex.shutdown()
    return out


WORKLOADS: dict[str, Callable[[WorkloadSpec, Executor | None], RunOutcome]] = {
    "micro": run_micro,
    "graph": run_graph,
    "place": run_place,
}
