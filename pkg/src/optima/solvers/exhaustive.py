"""Exhaustive search over every job permutation."""
from __future__ import annotations

import math
import time

import numpy as np

from .. import _kernels
from ..core import ProblemInstance, derive
from .result import InstanceTooLargeError, SolverResult

MAX_JOBS = 12


def _arrays(instance: ProblemInstance):
    return instance.lengths_array, instance.conflict_matrix


def solve_exhaustive(instance: ProblemInstance, *, force: bool = False) -> SolverResult:
    """Derive a schedule from all n! permutations and keep the first one of minimal makespan."""
    n = instance.n
    if n < 1:
        raise ValueError("exhaustive search needs at least one job")
    if n > MAX_JOBS and not force:
        raise InstanceTooLargeError(f"n={n} exceeds the exhaustive-search guard of {MAX_JOBS}; pass force=True")
    lengths, conf = _arrays(instance)
    t0 = time.perf_counter()
    best, perm, count, _ = _kernels.enumerate_permutations(lengths, conf, instance.m, False)
    wall = time.perf_counter() - t0
    perm = tuple(int(p) for p in perm)
    schedule = derive(instance, perm)
    assert schedule.makespan == best
    assert count == math.factorial(n)
    return SolverResult("es", float(best), schedule, perm, wall, int(count))


def all_makespans(instance: ProblemInstance) -> np.ndarray:
    """Makespan of every permutation, in lexicographic permutation order."""
    lengths, conf = _arrays(instance)
    _, _, _, out = _kernels.enumerate_permutations(lengths, conf, instance.m, True)
    return out
