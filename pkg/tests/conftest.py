import sys

import pytest

from pipeweave import Executor

_executors: dict[int, Executor] = {}


def executor_for(workers: int) -> Executor:
    """Shared executors, one per worker count, reused across the session."""
    ex = _executors.get(workers)
    if ex is None:
        ex = _executors[workers] = Executor(workers)
    return ex


@pytest.fixture(params=[1, 2, 4, 8], ids=lambda w: f"w{w}")
def executor(request):
    return executor_for(request.param)


@pytest.fixture
def fine_switching():
    """Switch threads far more often than the default to shake out races."""
    old = sys.getswitchinterval()
    sys.setswitchinterval(1e-5)
    yield
    sys.setswitchinterval(old)


ACCEPTANCE: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, line in ACCEPTANCE.items():
        terminalreporter.write_line(line)


def pytest_sessionfinish(session, exitstatus):
    for ex in _executors.values():
        ex.shutdown()
    _executors.clear()
