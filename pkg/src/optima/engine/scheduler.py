"""Length estimation and batch scheduling of transactions onto worker queues."""
from __future__ import annotations

import threading
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np

from ..core import ProblemInstance
from ..solvers import Cooling, SaParams, solve_sa
from .model import EngineParams, Transaction

# the factory-floor setting: linear cooling from 100 in steps of 0.05
ENGINE_SA_PARAMS = SaParams(t_max=100.0, cooling=Cooling.linear(0.05))
MIN_LENGTH = 1e-9


class LengthEstimator:
    """Running mean of observed lengths per transaction template.

    Subclasses may override :meth:`estimate` and :meth:`observe`; both receive
    the transaction parameters so an estimator can use more than the template.

    Parameters
    ----------
    prior : float
        Estimate returned for a template that has not been observed yet.
    """

    def __init__(self, prior: float = 1.0):
        if not prior > 0:
            raise ValueError("prior must be positive")
        self.prior = prior
        self._sum: dict[str, float] = defaultdict(float)
        self._count: dict[str, int] = defaultdict(int)
        self._lock = threading.Lock()

    def estimate(self, template_id: str, params: Mapping[str, Any] | None = None) -> float:
        with self._lock:
            c = self._count.get(template_id, 0)
            return self._sum[template_id] / c if c else self.prior

    def observe(self, template_id: str, length: float, params: Mapping[str, Any] | None = None) -> None:
        with self._lock:
            self._sum[template_id] += float(length)
            self._count[template_id] += 1


def build_conflict_matrix(batch: Sequence[Transaction]) -> np.ndarray:
    """Boolean matrix marking pairs of transactions that share a non-shareable plugin."""
    n = len(batch)
    conf = np.zeros((n, n), dtype=bool)
    locks = [frozenset(t.nonshareable_locks) for t in batch]
    for i in range(n):
        if not locks[i]:
            continue
        for j in range(i + 1, n):
            if locks[i] & locks[j]:
                conf[i, j] = conf[j, i] = True
    return conf


@dataclass(frozen=True)
class BatchSchedule:
    """Per-worker queues for one batch.

    ``queues`` is ``None`` for the unoptimised mode, in which every
    transaction goes to whichever worker becomes idle first.
    """

    batch: tuple[Transaction, ...]
    queues: tuple[tuple[Transaction, ...], ...] | None
    estimated_makespan: float = 0.0
    proposals: int = 0

    @property
    def single_dispatch(self) -> bool:
        return self.queues is None

    def loads(self) -> list[float]:
        if self.queues is None:
            return []
        return [sum(t.estimated_length for t in q) for q in self.queues]


def schedule_batch(batch: Sequence[Transaction], params: EngineParams,
                   sa_params: SaParams = ENGINE_SA_PARAMS, warm_start: bool = True) -> BatchSchedule:
    """Solve the batch as a conflict scheduling instance and split it into ``params.threads`` queues.

    With ``warm_start`` the annealer begins from arrival order, so the result
    is never worse (by estimate) than dispatching in arrival order.
    """
    batch = tuple(batch)
    if not batch:
        raise ValueError("cannot schedule an empty batch")
    if not params.optimization:
        return BatchSchedule(batch, None)
    m = params.threads
    if len(batch) == 1:
        queues = [(batch[0],)] + [()] * (m - 1)
        return BatchSchedule(batch, tuple(queues), max(batch[0].estimated_length, MIN_LENGTH))
    lengths = [max(float(t.estimated_length), MIN_LENGTH) for t in batch]
    conf = build_conflict_matrix(batch)
    pairs = list(zip(*np.nonzero(np.triu(conf))))
    instance = ProblemInstance(m, lengths, [(int(i), int(j)) for i, j in pairs])
    initial = range(len(batch)) if warm_start else None
    result = solve_sa(instance, sa_params, initial=initial)
    sched = result.best_schedule
    out = tuple(tuple(batch[j] for j in sched.machine_jobs(k)) for k in range(m))
    return BatchSchedule(batch, out, result.best_makespan, result.work_count)
