from __future__ import annotations

from dataclasses import dataclass

from ..core import Subschedule


class InstanceTooLargeError(ValueError):
    """Raised when an exact solver is asked to handle more jobs than its guard allows."""


@dataclass(frozen=True)
class SolverResult:
    solver: str
    best_makespan: float
    best_schedule: Subschedule
    best_permutation: tuple[int, ...]
    wall_time: float  # seconds
    work_count: int
    # best-makespan improvements in the order they were found (annealing only)
    history: tuple[float, ...] = ()

    def summary(self) -> dict:
        return {
            "solver": self.solver,
            "makespan": self.best_makespan,
            "permutation": list(self.best_permutation),
            "wall_ms": self.wall_time * 1e3,
            "work_count": self.work_count,
        }
