"""Level-wise dynamic programming over job subsets with dominance pruning.

Level ``k`` keeps, for every ``k``-job subset, the subschedules that survive
pruning.  Each survivor spawns one child per unplaced job.  A child is
dropped when another child over the same subset finishes all its machines
no later than the child's earliest-free machine.  During the first ``m``
levels machine-swapped duplicates are also collapsed.
"""
from __future__ import annotations

import time
from collections import defaultdict

from ..core import ProblemInstance, Subschedule, equivalence_key, extend
from .result import InstanceTooLargeError, SolverResult

MAX_JOBS = 62


def prune_dominated(group: list[Subschedule]) -> list[Subschedule]:
    """Remove every subschedule beaten by another member of the same subset.

    ``a`` beats ``b`` when ``a`` dominates ``b`` and either ``b`` does not
    dominate ``a`` or ``a`` has the smaller canonical key.  Mutual domination
    only happens between perfectly balanced subschedules with the same finish
    value, so one pass against the group minimum is enough.
    """
    if len(group) < 2:
        return group
    best_ms = min(s.makespan for s in group)
    # mutual-domination candidates: balanced at the group minimum
    tied = [s for s in group if s.makespan == best_ms]
    unbalanced_tied = any(s.min_time < best_ms for s in tied)
    balanced_keys = sorted(s.canonical_key() for s in tied if s.min_time == best_ms)
    min_balanced = balanced_keys[0] if balanced_keys else None
    kept = []
    representative_taken = False
    for s in group:
        mt = s.min_time
        if mt < best_ms:
            kept.append(s)
        elif s.makespan > mt or s.makespan > best_ms:
            # a group-minimum member has ms <= mt and is a different subschedule
            continue
        elif unbalanced_tied:
            continue
        elif not representative_taken and s.canonical_key() == min_balanced:
            kept.append(s)
            representative_taken = True
    return kept


def _collapse_equivalent(group: list[Subschedule]) -> list[Subschedule]:
    reps: dict[tuple, Subschedule] = {}
    for s in group:
        key = equivalence_key(s)
        cur = reps.get(key)
        if cur is None or s.canonical_key() < cur.canonical_key():
            reps[key] = s
    return list(reps.values())


def solve_dp(instance: ProblemInstance, *, equivalence_levels: int | None = None) -> SolverResult:
    """Exact solve; ``equivalence_levels`` defaults to the machine count."""
    n, m = instance.n, instance.m
    if n < 1:
        raise ValueError("dynamic programming needs at least one job")
    if n > MAX_JOBS:
        raise InstanceTooLargeError(f"n={n} exceeds the {MAX_JOBS}-bit subset mask")
    eq_levels = m if equivalence_levels is None else equivalence_levels
    t0 = time.perf_counter()
    level: list[Subschedule] = [Subschedule.empty(instance)]
    generated = 0
    for k in range(1, n + 1):
        groups: dict[int, list[Subschedule]] = defaultdict(list)
        for sub in level:
            machine = sub.machine
            base = sub.mask
            for job in range(n):
                if machine[job] < 0:
                    groups[base | (1 << job)].append(extend(sub, job, instance))
                    generated += 1
        level = []
        for mask in sorted(groups):
            group = groups[mask]
            if k <= eq_levels:
                group = _collapse_equivalent(group)
            level.extend(prune_dominated(group))
    best = min(level, key=lambda s: (s.makespan, s.canonical_key()))
    wall = time.perf_counter() - t0
    return SolverResult("dp", best.makespan, best, best.order, wall, generated)
