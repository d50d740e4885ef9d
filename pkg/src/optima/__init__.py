"""Scheduling of conflicting transactions on parallel workers, and an engine that runs them."""
from .core import (InstanceConfig, ProblemInstance, ScheduleMetrics, Subschedule, conflict_parity, derive,
                   dominates, equivalent, extend, generate_instance, metrics)

__version__ = "0.1.0"

__all__ = [
    "InstanceConfig", "ProblemInstance", "ScheduleMetrics", "Subschedule", "conflict_parity", "derive",
    "dominates", "equivalent", "extend", "generate_instance", "metrics",
]
