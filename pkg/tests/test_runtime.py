import itertools
import threading
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipeweave import (
    Executor,
    GraphError,
    GraphRunningError,
    SchedulingError,
    TaskGraph,
    TaskKind,
)
from pipeweave.runtime import run_graph

from conftest import executor_for


def do_while_graph(effects):
    """init -> body -> cond -> {body, done}; loops 100 times."""
    state = {"i": 0}
    tf = TaskGraph("do-while")

    def init():
        state["i"] = 0

    def body():
        state["i"] += 1
        effects["body"] += 1

    def cond():
        return 0 if state["i"] < 100 else 1

    def done():
        effects["done"] += 1

    init_t, body_t, done_t = tf.emplace(init, body, done)
    cond_t = tf.emplace_condition(cond)
    init_t.precede(body_t)
    body_t.precede(cond_t)
    cond_t.precede(body_t, done_t)
    return tf, state


class TestConstruction:
    def test_emplace_four_tasks_no_edges(self):
        tf = TaskGraph()
        tasks = tf.emplace(lambda: None, lambda: None, lambda: None, lambda: None)
        assert len(tasks) == 4
        assert len(tf) == 4
        assert tf.num_edges() == 0

    def test_single_node_is_source(self):
        tf = TaskGraph()
        t = tf.emplace(lambda: None)
        assert tf.sources() == [t]

    def test_condition_edges_are_weak_and_ordered(self):
        tf = TaskGraph()
        body, done = tf.emplace(lambda: None, lambda: None)
        cond = tf.emplace_condition(lambda: 0)
        cond.precede(body, done)
        node = cond._node
        assert [n.name for n in node.weak_successors] == [body.name, done.name]
        assert node.strong_successors == []
        assert body.num_strong_dependencies == 0
        assert done.num_strong_dependencies == 0

    def test_strong_chain(self):
        tf, _ = do_while_graph(Counter())
        init, body, done, cond = tf.tasks
        assert body.num_strong_dependencies == 1
        assert cond.num_strong_dependencies == 1
        assert tf.sources() == [init]

    def test_duplicate_edge_rejected(self):
        tf = TaskGraph()
        a, b = tf.emplace(lambda: None, lambda: None)
        a.precede(b)
        with pytest.raises(GraphError, match="duplicate"):
            a.precede(b)

    def test_cross_graph_edge_rejected(self):
        g1, g2 = TaskGraph("g1"), TaskGraph("g2")
        a = g1.emplace(lambda: None)
        b = g2.emplace(lambda: None)
        with pytest.raises(GraphError, match="different graphs"):
            a.precede(b)

    def test_composition_cycle_rejected(self):
        g1, g2 = TaskGraph("g1"), TaskGraph("g2")
        g1.composed_of(g2)
        with pytest.raises(GraphError, match="cycle"):
            g2.composed_of(g1)
        with pytest.raises(GraphError, match="cycle"):
            g1.composed_of(g1)

    def test_kinds(self):
        tf = TaskGraph()
        assert tf.emplace(lambda: None).kind is TaskKind.STATIC
        assert tf.emplace_condition(lambda: 0).kind is TaskKind.CONDITION
        assert tf.emplace_runtime(lambda rt: None).kind is TaskKind.RUNTIME
        assert tf.composed_of(TaskGraph()).kind is TaskKind.MODULE


class TestRun:
    def test_do_while_loop(self, executor):
        effects = Counter()
        tf, state = do_while_graph(effects)
        result = executor.run(tf).wait()
        assert result.ok
        assert state["i"] == 100
        assert effects == {"body": 100, "done": 1}

    def test_do_while_rerun(self):
        ex = executor_for(2)
        effects = Counter()
        tf, state = do_while_graph(effects)
        ex.run(tf).wait()
        ex.run(tf).wait()
        assert effects == {"body": 200, "done": 2}

    def test_empty_graph_resolves(self, executor):
        handle = executor.run(TaskGraph())
        assert handle.wait().ok
        assert handle.done()

    def test_independent_tasks_each_once(self, executor):
        counts = Counter()
        tf = TaskGraph()
        for i in range(50):
            tf.emplace(lambda i=i: counts.update([i]))
        assert executor.run(tf).wait().ok
        assert counts == Counter(range(50))

    def test_condition_single_successor(self):
        hits = Counter()
        state = {"n": 0}
        tf = TaskGraph()

        def step():
            state["n"] += 1
            hits["succ"] += 1

        start = tf.emplace_condition(lambda: 0)
        cond = tf.emplace_condition(lambda: 0 if state["n"] < 5 else 7)
        succ = tf.emplace(step)
        start.precede(cond)
        cond.precede(succ)
        succ.precede(cond)
        assert executor_for(4).run(tf).wait().ok
        assert hits["succ"] == 5

    def test_condition_out_of_range_ends_branch(self):
        ran = Counter()
        tf = TaskGraph()
        cond = tf.emplace_condition(lambda: 2)
        a, b = tf.emplace(lambda: ran.update("a"), lambda: ran.update("b"))
        cond.precede(a, b)
        assert executor_for(2).run(tf).wait().ok
        assert ran == Counter()

    def test_concurrent_run_of_same_graph_rejected(self):
        ex = executor_for(2)
        gate = threading.Event()
        tf = TaskGraph()
        tf.emplace(lambda: gate.wait(5))
        handle = ex.run(tf)
        with pytest.raises(GraphRunningError):
            ex.run(tf)
        with pytest.raises(GraphRunningError):
            tf.emplace(lambda: None)
        gate.set()
        assert handle.wait().ok

    def test_wait_twice_returns_cached_result(self):
        handle = executor_for(2).run(TaskGraph())
        assert handle.wait() is handle.wait()

    def test_failure_surfaces(self, executor):
        tf = TaskGraph()
        boom = ValueError("boom")
        after = Counter()

        def fail():
            raise boom

        a = tf.emplace(fail)
        b = tf.emplace(lambda: after.update("b"))
        a.precede(b)
        result = executor.run(tf).wait()
        assert not result.ok
        assert result.error is boom
        assert after == Counter()
        with pytest.raises(ValueError):
            result.raise_for_error()
        # graph is reusable after a failed run
        assert not tf.is_running

    def test_run_graph_helper(self):
        effects = Counter()
        tf, state = do_while_graph(effects)
        assert run_graph(tf, workers=3).ok
        assert state["i"] == 100


class TestRuntimeTasks:
    def test_schedules_peer_once(self, executor):
        ran = Counter()
        tf = TaskGraph()
        peer = tf.emplace(lambda: ran.update(["peer"]))
        starter = tf.emplace(lambda: None)
        # the out-of-range gate keeps peer from being a source
        gate = tf.emplace_condition(lambda: 5)
        gate.precede(peer)
        rt = tf.emplace_runtime(lambda h: h.schedule(peer))
        starter.precede(rt)
        assert executor.run(tf).wait().ok
        assert ran["peer"] == 1

    def test_schedule_nothing_is_static(self):
        ran = Counter()
        tf = TaskGraph()
        rt = tf.emplace_runtime(lambda h: ran.update(["rt"]))
        after = tf.emplace(lambda: ran.update(["after"]))
        rt.precede(after)
        assert executor_for(2).run(tf).wait().ok
        assert ran == {"rt": 1, "after": 1}

    def test_schedule_twice_runs_twice(self):
        ran = Counter()
        tf = TaskGraph()
        gate = tf.emplace_condition(lambda: 5)
        target = tf.emplace(lambda: ran.update(["t"]))
        gate.precede(target)

        def twice(h):
            h.schedule(target)
            h.schedule(target)

        tf.emplace_runtime(twice)
        assert executor_for(4).run(tf).wait().ok
        assert ran["t"] == 2

    def test_foreign_node_is_error(self):
        other = TaskGraph("other")
        foreign = other.emplace(lambda: None)
        tf = TaskGraph()
        tf.emplace_runtime(lambda h: h.schedule(foreign))
        result = executor_for(2).run(tf).wait()
        assert isinstance(result.error, SchedulingError)

    def test_handle_invalid_after_callable(self):
        kept = []
        tf = TaskGraph()
        target = tf.emplace(lambda: None)
        gate = tf.emplace_condition(lambda: 3)
        gate.precede(target)
        tf.emplace_runtime(kept.append)
        executor_for(1).run(tf).wait()
        with pytest.raises(SchedulingError):
            kept[0].schedule(target)


class TestComposition:
    def test_composition_order(self, executor):
        order = []
        lock = threading.Lock()

        def say(name):
            def fn():
                with lock:
                    order.append(name)

            return fn

        inner = TaskGraph("taskflow1")
        a, b = inner.emplace(say("A"), say("B"))
        a.precede(b)
        outer = TaskGraph("taskflow2")
        # D's subflow is replaced with two pre-declared static tasks
        c, d, d1, d2 = outer.emplace(say("C"), say("D"), say("D1"), say("D2"))
        e = outer.composed_of(inner)
        c.precede(d)
        d.precede(d1)
        d1.precede(d2)
        d2.precede(e)
        assert executor.run(outer).wait().ok
        assert order == ["C", "D", "D1", "D2", "A", "B"]

    def test_module_of_empty_graph(self):
        ran = Counter()
        outer = TaskGraph()
        m = outer.composed_of(TaskGraph("empty"))
        after = outer.emplace(lambda: ran.update(["after"]))
        m.precede(after)
        assert executor_for(2).run(outer).wait().ok
        assert ran["after"] == 1

    def test_two_modules_over_same_graph_sequential(self, executor):
        ran = Counter()
        inner = TaskGraph("inner")
        x, y = inner.emplace(lambda: ran.update("x"), lambda: ran.update("y"))
        x.precede(y)
        outer = TaskGraph()
        m1 = outer.composed_of(inner)
        m2 = outer.composed_of(inner)
        m1.precede(m2)
        assert executor.run(outer).wait().ok
        assert ran == {"x": 2, "y": 2}

    def test_two_modules_over_same_graph_concurrently_is_error(self):
        gate = threading.Event()
        inner = TaskGraph("inner")
        inner.emplace(lambda: gate.wait(0.5))
        outer = TaskGraph()
        outer.composed_of(inner)
        outer.composed_of(inner)
        result = executor_for(4).run(outer).wait()
        gate.set()
        assert isinstance(result.error, SchedulingError)

    def test_completion_waits_for_nested_modules(self, executor):
        effects = Counter()
        innermost = TaskGraph("l2")
        for _ in range(20):
            innermost.emplace(lambda: effects.update(["leaf"]))
        middle = TaskGraph("l1")
        m = middle.composed_of(innermost)
        tail = middle.emplace(lambda: effects.update(["tail"]))
        m.precede(tail)
        outer = TaskGraph("l0")
        outer.composed_of(middle)
        assert executor.run(outer).wait().ok
        assert effects == {"leaf": 20, "tail": 1}

    def test_nested_wait_inside_worker(self):
        # one worker must not deadlock when a task waits on another run
        ex = Executor(1)
        try:
            inner = TaskGraph("inner")
            ran = Counter()
            inner.emplace(lambda: ran.update(["inner"]))
            outer = TaskGraph("outer")
            outer.emplace(lambda: ex.run(inner).wait().raise_for_error())
            assert ex.run(outer).wait(timeout=10).ok
            assert ran["inner"] == 1
        finally:
            ex.shutdown()


# -- randomized DAG properties ---------------------------------------------


@st.composite
def random_dags(draw):
    n = draw(st.integers(1, 32))
    edges = draw(
        st.sets(
            st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)).filter(lambda e: e[0] < e[1]),
            max_size=3 * n,
        )
    )
    workers = draw(st.sampled_from([1, 2, 4, 8]))
    return n, sorted(edges), workers


@settings(max_examples=1000, deadline=None)
@given(random_dags())
def test_random_dag_exactly_once_and_ordered(dag):
    n, edges, workers = dag
    seq = itertools.count()
    begin = {}
    end = {}
    counts = Counter()

    def make(i):
        def fn():
            begin[i] = next(seq)
            counts[i] += 1
            end[i] = next(seq)

        return fn

    tf = TaskGraph()
    tasks = [tf.emplace(make(i)) for i in range(n)]
    for a, b in edges:
        tasks[a].precede(tasks[b])
    result = executor_for(workers).run(tf).wait()
    assert result.ok
    # exactly once, and every callable returned before wait() did
    assert counts == Counter(range(n))
    assert len(end) == n
    for a, b in edges:
        assert end[a] < begin[b]


@settings(max_examples=200, deadline=None)
@given(iterations=st.integers(0, 40), workers=st.sampled_from([1, 2, 4, 8]))
def test_condition_loop_counts(iterations, workers):
    state = {"i": 0, "done": 0}
    # a condition gate launches the loop so cond has a single strong predecessor (body)
    tf2 = TaskGraph()
    init2 = tf2.emplace(lambda: state.update(i=0))
    body2 = tf2.emplace(lambda: state.update(i=state["i"] + 1))
    cond2 = tf2.emplace_condition(lambda: 0 if state["i"] < iterations else 1)
    done2 = tf2.emplace(lambda: state.update(done=state["done"] + 1))
    gate = tf2.emplace_condition(lambda: 0)
    init2.precede(gate)
    gate.precede(cond2)
    cond2.precede(body2, done2)
    body2.precede(cond2)
    assert executor_for(workers).run(tf2).wait().ok
    assert state["i"] == iterations
    assert state["done"] == 1
