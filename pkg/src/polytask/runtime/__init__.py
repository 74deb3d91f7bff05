"""Task runtime: dependency graph, futures, real execution and simulation."""
from .engine import (
    IN, INOUT, OUT, RAW, WAR, WAW, DataItem, DeadlockDetected, DuplicateTask, Edge,
    FutureHandle, Runtime, TaskFailed, TaskGraph, TaskInstance, TaskType, UnknownDataItem,
    UnknownTask,
)
from .simulate import (
    DEFAULT_COST, ZERO_OVERHEAD, CostModel, ExecutionReport, ScheduleRecord, critical_path,
    export_dot, export_trace, simulate,
)
