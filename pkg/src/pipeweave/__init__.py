"""Task-parallel pipeline scheduling on a work-stealing task-graph executor."""

from .pipeline import (
    JoinCounterMatrix,
    Pipe,
    Pipeflow,
    Pipeline,
    PipelineError,
    PipeType,
    ScalablePipeline,
    as_module,
    initial_join_counters,
)
from .runtime import (
    Executor,
    GraphError,
    GraphRunningError,
    RunHandle,
    RunResult,
    SchedulerHandle,
    SchedulingError,
    Task,
    TaskGraph,
    TaskKind,
    current_worker,
)
from .trace import TraceEvent, TraceLog, ValidationReport, validate

__version__ = "0.1.0"
