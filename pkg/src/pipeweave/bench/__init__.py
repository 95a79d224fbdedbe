"""Benchmark workloads and the ``pipeweave-bench`` command line."""

from .workloads import (
    CSV_COLUMNS,
    LevelizedGraph,
    PlacementGrid,
    ResultRow,
    WorkloadSpec,
    run_graph,
    run_micro,
    run_place,
)
