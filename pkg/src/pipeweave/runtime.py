"""Work-stealing task-graph executor.

A :class:`TaskGraph` holds static, condition, runtime and module nodes. Edges out
of a condition node are *weak*: they do not count toward the successor's join
counter, and only the successor selected by the condition's return value is
scheduled. All other edges are *strong*.

An :class:`Executor` owns a fixed pool of worker threads, one deque per worker.
Owners push and pop at the right end; thieves take from the left end.
"""

from __future__ import annotations

import enum
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterable

from ._log import TRACE, get_logger

__all__ = [
    "Executor",
    "GraphError",
    "GraphRunningError",
    "RunHandle",
    "RunResult",
    "SchedulerHandle",
    "SchedulingError",
    "Task",
    "TaskGraph",
    "TaskKind",
    "current_worker",
]

log = get_logger("pipeweave.runtime")
_TRACE_ON = log.isEnabledFor(TRACE)

_tls = threading.local()


class GraphError(Exception):
    """Invalid graph construction (cross-graph edge, duplicate edge, composition cycle)."""


class GraphRunningError(GraphError):
    """The graph is already running, or was modified while running."""


class SchedulingError(RuntimeError):
    """A runtime-task contract was violated while the graph was executing."""


class TaskKind(enum.Enum):
    STATIC = "static"
    CONDITION = "condition"
    RUNTIME = "runtime"
    MODULE = "module"


class _Node:
    __slots__ = (
        "graph",
        "kind",
        "fn",
        "name",
        "module",
        "strong_successors",
        "weak_successors",
        "strong_dependency_count",
        "num_predecessors",
        "join_counter",
    )

    def __init__(self, graph: TaskGraph, kind: TaskKind, fn: Any, name: str) -> None:
        self.graph = graph
        self.kind = kind
        self.fn = fn
        self.name = name
        self.module: Any = None
        self.strong_successors: list[_Node] = []
        self.weak_successors: list[_Node] = []
        self.strong_dependency_count = 0
        self.num_predecessors = 0
        self.join_counter = 0

    def __repr__(self) -> str:
        return f"<{self.kind.value} task {self.name!r}>"


class Task:
    """Lightweight reference to a node of a :class:`TaskGraph`."""

    __slots__ = ("_node",)

    def __init__(self, node: _Node) -> None:
        self._node = node

    @property
    def name(self) -> str:
        return self._node.name

    @property
    def kind(self) -> TaskKind:
        return self._node.kind

    @property
    def graph(self) -> TaskGraph:
        return self._node.graph

    @property
    def num_successors(self) -> int:
        return len(self._node.strong_successors) + len(self._node.weak_successors)

    @property
    def num_strong_dependencies(self) -> int:
        return self._node.strong_dependency_count

    def precede(self, *others: Task) -> Task:
        """Add edges ``self -> other`` in argument order.

        Edges out of a condition task are weak and are indexed by the
        condition's return value in the order they were declared.
        """
        src = self._node
        src.graph._check_mutable()
        for other in others:
            dst = other._node
            if dst.graph is not src.graph:
                raise GraphError(f"cannot link {src!r} to {dst!r}: tasks belong to different graphs")
            if dst in src.strong_successors or dst in src.weak_successors:
                raise GraphError(f"duplicate edge {src.name!r} -> {dst.name!r}")
            if src.kind is TaskKind.CONDITION:
                src.weak_successors.append(dst)
            else:
                src.strong_successors.append(dst)
                dst.strong_dependency_count += 1
            dst.num_predecessors += 1
        return self

    def succeed(self, *others: Task) -> Task:
        for other in others:
            other.precede(self)
        return self

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Task) and other._node is self._node

    def __hash__(self) -> int:
        return id(self._node)

    def __repr__(self) -> str:
        return f"Task({self._node.name!r}, {self._node.kind.value})"


def _graph_of(obj: Any) -> TaskGraph:
    if isinstance(obj, TaskGraph):
        return obj
    graph = getattr(obj, "task_graph", None)
    if isinstance(graph, TaskGraph):
        return graph
    raise TypeError(f"expected a TaskGraph or an object exposing .task_graph, got {type(obj).__name__}")


class TaskGraph:
    """A named collection of task nodes and the edges between them."""

    def __init__(self, name: str = "") -> None:
        self.name = name
        self._nodes: list[_Node] = []
        self._lock = threading.Lock()
        self._running = False

    def __len__(self) -> int:
        return len(self._nodes)

    def __repr__(self) -> str:
        return f"TaskGraph({self.name!r}, {len(self._nodes)} nodes)"

    @property
    def is_running(self) -> bool:
        return self._running

    @property
    def tasks(self) -> list[Task]:
        return [Task(n) for n in self._nodes]

    def sources(self) -> list[Task]:
        return [Task(n) for n in self._nodes if n.num_predecessors == 0]

    def num_edges(self) -> int:
        return sum(len(n.strong_successors) + len(n.weak_successors) for n in self._nodes)

    def _check_mutable(self) -> None:
        if self._running:
            raise GraphRunningError(f"graph {self.name!r} cannot be modified while running")

    def _add(self, kind: TaskKind, fn: Any, name: str | None) -> Task:
        self._check_mutable()
        if name is None:
            name = getattr(fn, "__name__", None) or f"{kind.value}-{len(self._nodes)}"
        node = _Node(self, kind, fn, name)
        self._nodes.append(node)
        return Task(node)

    def emplace(self, *fns: Callable[[], Any]) -> Any:
        """Add one static task per callable. Returns a Task, or a tuple for several."""
        tasks = tuple(self._add(TaskKind.STATIC, fn, None) for fn in fns)
        return tasks[0] if len(tasks) == 1 else tasks

    def emplace_condition(self, fn: Callable[[], int], name: str | None = None) -> Task:
        return self._add(TaskKind.CONDITION, fn, name)

    def emplace_runtime(self, fn: Callable[[SchedulerHandle], Any], name: str | None = None) -> Task:
        return self._add(TaskKind.RUNTIME, fn, name)

    def composed_of(self, inner: Any, name: str | None = None) -> Task:
        """Add a module task that runs ``inner`` (a graph, or anything with ``.task_graph``)."""
        graph = _graph_of(inner)
        if graph is self or self in _module_closure(graph):
            raise GraphError(f"composing {graph.name!r} into {self.name!r} would create a cycle")
        task = self._add(TaskKind.MODULE, None, name or f"module:{graph.name}")
        task._node.module = graph
        return task


def _module_closure(graph: TaskGraph) -> set[TaskGraph]:
    seen: set[int] = set()
    out: set[TaskGraph] = set()
    stack = [graph]
    while stack:
        g = stack.pop()
        for n in g._nodes:
            if n.module is not None and id(n.module) not in seen:
                seen.add(id(n.module))
                out.add(n.module)
                stack.append(n.module)
    return out


@dataclass(frozen=True)
class RunResult:
    error: BaseException | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def raise_for_error(self) -> None:
        if self.error is not None:
            raise self.error


class _Run:
    """Execution state of one graph run (a root run or a module sub-run)."""

    __slots__ = ("graph", "parent", "module_node", "root", "handle", "pending", "lock", "error")

    def __init__(self, graph: TaskGraph, parent: _Run | None = None, module_node: _Node | None = None) -> None:
        self.graph = graph
        self.parent = parent
        self.module_node = module_node
        self.root: _Run = parent.root if parent is not None else self
        self.handle: RunHandle | None = None
        self.pending = 0
        self.lock = threading.Lock()
        self.error: BaseException | None = None

    def fail(self, exc: BaseException) -> None:
        root = self.root
        with root.lock:
            if root.error is None:
                root.error = exc


class RunHandle:
    """Completion handle returned by :meth:`Executor.run`."""

    def __init__(self, executor: Executor) -> None:
        self._executor = executor
        self._done = threading.Event()
        self._result: RunResult | None = None

    def done(self) -> bool:
        return self._done.is_set()

    def _resolve(self, result: RunResult) -> None:
        self._result = result
        self._done.set()

    def wait(self, timeout: float | None = None) -> RunResult:
        """Block until the run finishes.

        When called from one of the executor's own workers, the caller keeps
        executing queued tasks instead of blocking, so nested runs cannot
        starve the pool.
        """
        ex = self._executor
        if getattr(_tls, "executor", None) is ex and not self._done.is_set():
            idx = _tls.index
            deadline = None if timeout is None else time.monotonic() + timeout
            while not self._done.is_set():
                item = ex._next_task(idx)
                if item is not None:
                    ex._invoke(*item)
                    continue
                if deadline is not None and time.monotonic() >= deadline:
                    break
                self._done.wait(0.0005)
        elif not self._done.wait(timeout):
            raise TimeoutError("run did not complete in time")
        if self._result is None:
            raise TimeoutError("run did not complete in time")
        return self._result


class SchedulerHandle:
    """Passed to runtime tasks; lets them push nodes of the running graph to the executor."""

    __slots__ = ("_executor", "_run")

    def __init__(self, executor: Executor, run: _Run) -> None:
        self._executor = executor
        self._run: _Run | None = run

    @property
    def executor(self) -> Executor:
        return self._executor

    @property
    def worker(self) -> int | None:
        return current_worker()

    @property
    def cancelled(self) -> bool:
        """True once any task of the enclosing top-level run has failed."""
        run = self._run
        return run is not None and run.root.error is not None

    def schedule(self, task: Task) -> None:
        run = self._run
        if run is None:
            raise SchedulingError("scheduler handle used outside of its runtime task")
        node = task._node
        if node.graph is not run.graph:
            raise SchedulingError(f"{node!r} does not belong to the running graph {run.graph.name!r}")
        self._executor._schedule(run, node)


def current_worker() -> int | None:
    """Index of the executor worker running the calling thread, or None."""
    return getattr(_tls, "index", None)


class Executor:
    """Fixed pool of work-stealing worker threads."""

    _SPIN_ROUNDS = 2

    def __init__(self, workers: int | None = None) -> None:
        n = workers if workers is not None else (os.cpu_count() or 1)
        if n < 1:
            raise ValueError("an executor needs at least one worker")
        self._queues: list[deque] = [deque() for _ in range(n)]
        self._inbox: deque = deque()
        self._cv = threading.Condition()
        self._sleepers = 0
        self._closed = False
        self._threads = [
            threading.Thread(target=self._worker_loop, args=(i,), name=f"pipeweave-{i}", daemon=True)
            for i in range(n)
        ]
        for t in self._threads:
            t.start()

    @property
    def worker_count(self) -> int:
        return len(self._queues)

    def __enter__(self) -> Executor:
        return self

    def __exit__(self, *exc: object) -> None:
        self.shutdown()

    def shutdown(self) -> None:
        with self._cv:
            self._closed = True
            self._cv.notify_all()
        me = threading.current_thread()
        for t in self._threads:
            if t is not me:
                t.join()

    # -- submission -------------------------------------------------------

    def run(self, graph: Any) -> RunHandle:
        """Run a graph (or anything exposing ``.task_graph``) once."""
        if self._closed:
            raise RuntimeError("executor has been shut down")
        g = _graph_of(graph)
        handle = RunHandle(self)
        run = _Run(g)
        run.handle = handle
        if not self._start(run):
            raise GraphRunningError(f"graph {g.name!r} is already running")
        return handle

    def run_and_wait(self, graph: Any) -> RunResult:
        return self.run(graph).wait()

    def _start(self, run: _Run) -> bool:
        g = run.graph
        with g._lock:
            if g._running:
                return False
            g._running = True
        nodes = g._nodes
        for n in nodes:
            n.join_counter = n.strong_dependency_count
        if log.isEnabledFor(TRACE):
            log.log(TRACE, "start %r (%d nodes)", g, len(nodes))
        # hold one pending slot while sources are pushed so an early finisher
        # cannot complete the run prematurely
        run.pending = 1
        for n in nodes:
            if n.num_predecessors == 0:
                self._schedule(run, n)
        self._finish(run)
        return True

    def _schedule(self, run: _Run, node: _Node) -> None:
        with run.lock:
            run.pending += 1
        self._push((run, node))

    def _push(self, item: tuple) -> None:
        if getattr(_tls, "executor", None) is self:
            self._queues[_tls.index].append(item)
        else:
            self._inbox.append(item)
        if self._sleepers:
            with self._cv:
                self._cv.notify()

    # -- workers ----------------------------------------------------------

    def _next_task(self, idx: int) -> tuple | None:
        try:
            return self._queues[idx].pop()
        except IndexError:
            pass
        try:
            return self._inbox.popleft()
        except IndexError:
            pass
        queues = self._queues
        n = len(queues)
        if n > 1:
            start = random.randrange(n)
            for k in range(n):
                victim = (start + k) % n
                if victim == idx:
                    continue
                try:
                    return queues[victim].popleft()
                except IndexError:
                    continue
        return None

    def _has_work(self) -> bool:
        return bool(self._inbox) or any(self._queues)

    def _worker_loop(self, idx: int) -> None:
        _tls.executor = self
        _tls.index = idx
        spins = 0
        while True:
            item = self._next_task(idx)
            if item is not None:
                spins = 0
                self._invoke(*item)
                continue
            if spins < self._SPIN_ROUNDS:
                spins += 1
                time.sleep(0)
                continue
            spins = 0
            with self._cv:
                self._sleepers += 1
                while not self._closed and not self._has_work():
                    self._cv.wait()
                self._sleepers -= 1
                if self._closed:
                    return

    # -- execution --------------------------------------------------------

    def _invoke(self, run: _Run, node: _Node) -> None:
        if run.root.error is not None:
            self._finish(run)
            return
        if _TRACE_ON:
            log.log(TRACE, "worker %s runs %r", current_worker(), node)
        node.join_counter = node.strong_dependency_count
        kind = node.kind
        try:
            if kind is TaskKind.STATIC:
                node.fn()
                self._fire(run, node)
            elif kind is TaskKind.CONDITION:
                index = node.fn()
                weak = node.weak_successors
                if isinstance(index, int) and 0 <= index < len(weak):
                    self._schedule(run, weak[index])
                elif log.isEnabledFor(TRACE):
                    log.log(TRACE, "%r returned %r: branch ends", node, index)
            elif kind is TaskKind.RUNTIME:
                handle = SchedulerHandle(self, run)
                try:
                    node.fn(handle)
                finally:
                    handle._run = None
                self._fire(run, node)
            else:
                if self._enter_module(run, node):
                    return
                self._fire(run, node)
        except BaseException as exc:  # surfaced through RunResult
            log.info("task %r failed: %r", node, exc)
            run.fail(exc)
        self._finish(run)

    def _fire(self, run: _Run, node: _Node) -> None:
        for succ in node.strong_successors:
            with run.lock:
                succ.join_counter -= 1
                ready = succ.join_counter == 0
            if ready:
                self._schedule(run, succ)

    def _enter_module(self, run: _Run, node: _Node) -> bool:
        """Start the module's sub-run. Returns False if it completed immediately."""
        inner: TaskGraph = node.module
        if not inner._nodes:
            return False
        sub = _Run(inner, parent=run, module_node=node)
        if not self._start(sub):
            raise SchedulingError(f"module graph {inner.name!r} is already running")
        return True

    def _finish(self, run: _Run) -> None:
        with run.lock:
            run.pending -= 1
            done = run.pending == 0
        if not done:
            return
        with run.graph._lock:
            run.graph._running = False
        parent = run.parent
        if parent is not None:
            if run.root.error is None:
                try:
                    self._fire(parent, run.module_node)
                except BaseException as exc:
                    parent.fail(exc)
            self._finish(parent)
        else:
            if _TRACE_ON:
                log.log(TRACE, "run of %r complete", run.graph)
            run.handle._resolve(RunResult(run.error))


def run_graph(graph: Any, workers: int | None = None) -> RunResult:
    """Run ``graph`` once on a throwaway executor."""
    with Executor(workers) as ex:
        return ex.run(graph).wait()


def chain(tasks: Iterable[Task]) -> None:
    """Link ``tasks`` into a strong linear chain."""
    tasks = list(tasks)
    for a, b in zip(tasks, tasks[1:]):
        a.precede(b)
