"""Calibrated busy work that releases the GIL while it spins."""

from __future__ import annotations

import time
from functools import lru_cache

from numba import njit


@njit(nogil=True, cache=True)
def _spin(iterations: int) -> float:
    x = 1.0
    for _ in range(iterations):
        x = x * 1.0000001 + 1e-9
    return x


@lru_cache(maxsize=1)
def iterations_per_us() -> float:
    _spin(1000)
    n = 1_000_000
    while True:
        t0 = time.perf_counter()
        _spin(n)
        dt = time.perf_counter() - t0
        if dt > 0.02:
            break
        n *= 2
    # best of three to shed scheduler noise
    best = dt
    for _ in range(2):
        t0 = time.perf_counter()
        _spin(n)
        best = min(best, time.perf_counter() - t0)
    return n / (best * 1e6)


def busy_work(us: float) -> None:
    """Spin for roughly ``us`` microseconds of CPU time."""
    if us <= 0:
        return
    _spin(int(us * iterations_per_us()))
