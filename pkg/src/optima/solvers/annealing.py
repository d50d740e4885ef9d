"""Simulated annealing over job permutations with pairwise-swap moves."""
from __future__ import annotations

import math
import random
import time
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..core import ProblemInstance, check_permutation, derive
from .result import SolverResult

COOLING_KINDS = ("linear", "geometric", "slow")


class InvalidParamsError(ValueError):
    pass


@dataclass(frozen=True)
class Cooling:
    """Temperature update applied once per proposed move.

    linear: ``T - rate``; geometric: ``rate * T``; slow: ``T / (1 + rate * T)``.
    """

    kind: str
    rate: float

    @classmethod
    def linear(cls, a: float) -> "Cooling":
        return cls("linear", a)

    @classmethod
    def geometric(cls, r: float) -> "Cooling":
        return cls("geometric", r)

    @classmethod
    def slow(cls, beta: float) -> "Cooling":
        return cls("slow", beta)

    def __post_init__(self):
        if self.kind not in COOLING_KINDS:
            raise InvalidParamsError(f"unknown cooling {self.kind!r}")
        if self.kind == "geometric":
            if not 0 < self.rate < 1:
                raise InvalidParamsError(f"geometric ratio must lie in (0, 1), got {self.rate}")
        elif self.rate <= 0:
            raise InvalidParamsError(f"{self.kind} cooling rate must be positive, got {self.rate}")

    def describe(self) -> str:
        symbol = {"linear": "a", "geometric": "r", "slow": "beta"}[self.kind]
        return f"{self.kind}({symbol}={self.rate:g})"


@dataclass(frozen=True)
class SaParams:
    t_max: float = 100.0
    cooling: Cooling = field(default_factory=lambda: Cooling.linear(0.01))
    t_halt: float | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not self.t_max > 0:
            raise InvalidParamsError(f"t_max must be positive, got {self.t_max}")
        if self.t_halt is not None and not 0 <= self.t_halt < self.t_max:
            raise InvalidParamsError(f"t_halt must lie in [0, t_max), got {self.t_halt}")

    @property
    def halt_threshold(self) -> float:
        # geometric and slow cooling never reach zero
        if self.t_halt is not None:
            return self.t_halt
        return 0.0 if self.cooling.kind == "linear" else 1e-3

    def describe(self) -> str:
        return f"tmax={self.t_max:g};{self.cooling.describe()}"


def temperatures(params: SaParams):
    """Yield the temperature in force at each step until the halt threshold is reached."""
    halt = params.halt_threshold
    # absorbs rounding in t_max - k * a so that e.g. 50 / 0.1 gives exactly 500 steps
    eps = 1e-9 * params.t_max
    cooling = params.cooling
    t = params.t_max
    k = 0
    while t > halt + eps:
        yield t
        k += 1
        if cooling.kind == "linear":
            t = params.t_max - k * cooling.rate
        elif cooling.kind == "geometric":
            t = t * cooling.rate
        else:
            t = t / (1.0 + cooling.rate * t)


def solve_sa(instance: ProblemInstance, params: SaParams = SaParams(), initial=None) -> SolverResult:
    """Anneal from a random permutation, or from ``initial`` when one is given."""
    n = instance.n
    if n < 2:
        raise ValueError("simulated annealing needs at least two jobs")
    lengths, conf, m = instance.lengths_array, instance.conflict_matrix, instance.m
    rng = random.Random(params.rng_seed)
    t0 = time.perf_counter()
    if initial is None:
        order = list(range(n))
        rng.shuffle(order)
    else:
        order = list(check_permutation(initial, n))
    perm = np.array(order, dtype=np.int64)
    current = _kernels.makespan(perm, lengths, conf, m)
    best, best_perm = current, perm.copy()
    history = [best]
    proposals = 0
    positions = range(n)
    for temp in temperatures(params):
        i, j = rng.sample(positions, 2)
        perm[i], perm[j] = perm[j], perm[i]
        candidate = _kernels.makespan(perm, lengths, conf, m)
        proposals += 1
        delta = candidate - current
        if delta <= 0 or rng.random() < math.exp(-delta / temp):
            current = candidate
            if candidate < best:
                best, best_perm = candidate, perm.copy()
                history.append(best)
        else:
            perm[i], perm[j] = perm[j], perm[i]
    wall = time.perf_counter() - t0
    best_perm_t = tuple(int(p) for p in best_perm)
    schedule = derive(instance, best_perm_t)
    return SolverResult("sa", float(schedule.makespan), schedule, best_perm_t, wall, proposals, tuple(history))
