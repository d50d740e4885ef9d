"""Problem model for scheduling conflicting jobs on identical parallel machines.

A job occupies one machine for its full length and may not overlap in time
with any job it conflicts with, wherever that job runs.  Schedules are built
from job permutations by list scheduling: each job goes to the machine that
finishes earliest (lowest index on ties) and starts as soon as that machine
is free and every conflicting job placed before it has completed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np


class InvalidInstanceError(ValueError):
    """Raised when instance data violates the model invariants."""


class InvalidPermutationError(ValueError):
    pass


class DuplicateJobError(ValueError):
    pass


class UndefinedParityError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True, init=False)
class ProblemInstance:
    """A scheduling instance.

    Parameters
    ----------
    m : int
        Number of identical machines.
    lengths : sequence of float
        Processing time of each job; all strictly positive.
    conflicts : iterable of (i, j) pairs
        Unordered conflicting job pairs.  Stored normalised as ``i < j``.
    """

    m: int
    lengths: tuple[float, ...]
    conflicts: frozenset[tuple[int, int]]

    def __init__(self, m: int, lengths: Sequence[float], conflicts: Iterable[Sequence[int]] = ()):
        lengths = tuple(float(x) for x in lengths)
        pairs = set()
        n = len(lengths)
        for pair in conflicts:
            i, j = (int(v) for v in pair)
            if i == j:
                raise InvalidInstanceError(f"job {i} cannot conflict with itself")
            if not (0 <= i < n and 0 <= j < n):
                raise InvalidInstanceError(f"conflict pair ({i}, {j}) out of range for n={n}")
            pairs.add((min(i, j), max(i, j)))
        if int(m) != m or m < 1:
            raise InvalidInstanceError(f"machine count must be a positive integer, got {m}")
        for idx, length in enumerate(lengths):
            if not (length > 0 and math.isfinite(length)):
                raise InvalidInstanceError(f"job {idx} has non-positive length {length}")
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "conflicts", frozenset(pairs))

    @classmethod
    def from_matrix(cls, m: int, lengths: Sequence[float], matrix) -> "ProblemInstance":
        """Build from a dense boolean conflict matrix; must be symmetric with a zero diagonal."""
        c = np.asarray(matrix, dtype=bool)
        n = len(lengths)
        if c.shape != (n, n):
            raise InvalidInstanceError(f"conflict matrix shape {c.shape} does not match n={n}")
        if not np.array_equal(c, c.T):
            raise InvalidInstanceError("conflict matrix is not symmetric")
        if c.diagonal().any():
            raise InvalidInstanceError("conflict matrix has a non-zero diagonal")
        rows, cols = np.nonzero(np.triu(c, 1))
        return cls(m, lengths, zip(rows.tolist(), cols.tolist()))

    @property
    def n(self) -> int:
        return len(self.lengths)

    @cached_property
    def conflict_matrix(self) -> np.ndarray:
        c = np.zeros((self.n, self.n), dtype=np.bool_)
        for i, j in self.conflicts:
            c[i, j] = c[j, i] = True
        c.setflags(write=False)
        return c

    @cached_property
    def neighbours(self) -> tuple[tuple[int, ...], ...]:
        """Conflicting jobs of each job, ascending."""
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in sorted(self.conflicts):
            adj[i].append(j)
            adj[j].append(i)
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def lengths_array(self) -> np.ndarray:
        arr = np.array(self.lengths, dtype=np.float64)
        arr.setflags(write=False)
        return arr

    def conflicting(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.conflicts

    # JSON round trip ---------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "lengths": list(self.lengths),
            "conflicts": [list(p) for p in sorted(self.conflicts)],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemInstance":
        try:
            lengths = data["lengths"]
            inst = cls(data["m"], lengths, data.get("conflicts", []))
        except (KeyError, TypeError) as exc:
            raise InvalidInstanceError(f"malformed instance: {exc}") from exc
        if "n" in data and data["n"] != inst.n:
            raise InvalidInstanceError(f"n={data['n']} but {inst.n} lengths given")
        return inst

    def dumps(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def loads(cls, text: str) -> "ProblemInstance":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidInstanceError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)


@dataclass(frozen=True)
class InstanceConfig:
    n: int
    m: int
    length_mean: float = 1000.0
    length_stddev: float = 100.0
    conflict_parity: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.length_mean <= 0:
            raise ConfigurationError(f"length mean must be positive, got {self.length_mean}")
        if self.length_stddev < 0:
            raise ConfigurationError("length stddev must be non-negative")
        if not 0.0 <= self.conflict_parity <= 1.0:
            raise ConfigurationError(f"conflict parity must lie in [0, 1], got {self.conflict_parity}")
        if self.n < 0 or self.m < 1:
            raise ConfigurationError(f"bad sizes n={self.n}, m={self.m}")


# Generated lengths are snapped to multiples of 2**-20 so that every sum of
# them is exact in float64 (as long as totals stay below 2**33); schedules
# built in different orders then agree bit for bit.
LENGTH_QUANTUM = 2.0 ** -20


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def conflict_count_for(n: int, cp: float) -> int:
    # half-up rounding; Python's round() would send 2.5 to 2
    return int(math.floor(cp * _pair_count(n) + 0.5))


def conflict_parity(instance: ProblemInstance) -> float:
    if instance.n < 2:
        raise UndefinedParityError("conflict parity needs at least two jobs")
    return len(instance.conflicts) / _pair_count(instance.n)


def generate_instance(config: InstanceConfig, rng: np.random.Generator | None = None) -> ProblemInstance:
    """Random instance with normal lengths and an exact number of conflicting pairs.

    Lengths that come out non-positive are redrawn, then rounded to a multiple
    of ``LENGTH_QUANTUM``.  When ``rng`` is omitted the
    length and conflict streams are spawned from ``config.rng_seed``.
    """
    if rng is None:
        len_seq, conf_seq = np.random.SeedSequence(config.rng_seed).spawn(2)
        len_rng, conf_rng = np.random.default_rng(len_seq), np.random.default_rng(conf_seq)
    else:
        len_rng = conf_rng = rng
    def draw(size):
        return np.round(len_rng.normal(config.length_mean, config.length_stddev, size) / LENGTH_QUANTUM) * LENGTH_QUANTUM

    lengths = draw(config.n)
    bad = lengths <= 0
    while bad.any():
        lengths[bad] = draw(int(bad.sum()))
        bad = lengths <= 0
    pairs = list(combinations(range(config.n), 2))
    k = conflict_count_for(config.n, config.conflict_parity) if config.n >= 2 else 0
    chosen = conf_rng.choice(len(pairs), size=k, replace=False) if k else []
    return ProblemInstance(config.m, lengths.tolist(), [pairs[i] for i in chosen])


@dataclass(frozen=True)
class ScheduleMetrics:
    makespan: float
    min_time: float


@dataclass(frozen=True)
class Subschedule:
    """A (possibly partial) schedule where every job starts as early as allowed.

    Per-job tuples are indexed by job id; unplaced jobs have machine ``-1``.
    ``order`` records the insertion order, which is a permutation prefix that
    reproduces this subschedule under the derivation rule.
    """

    machine: tuple[int, ...]
    start: tuple[float, ...]
    completion: tuple[float, ...]
    machine_finish: tuple[float, ...]
    machine_last: tuple[int, ...]
    order: tuple[int, ...]

    @classmethod
    def empty(cls, instance: ProblemInstance) -> "Subschedule":
        n, m = instance.n, instance.m
        return cls((-1,) * n, (0.0,) * n, (0.0,) * n, (0.0,) * m, (-1,) * m, ())

    @property
    def size(self) -> int:
        return len(self.order)

    @property
    def placed(self) -> frozenset[int]:
        return frozenset(self.order)

    @property
    def mask(self) -> int:
        bits = 0
        for j in self.order:
            bits |= 1 << j
        return bits

    @property
    def last_jobs(self) -> frozenset[int]:
        return frozenset(j for j in self.machine_last if j >= 0)

    @property
    def placements(self) -> dict[int, tuple[int, float, float]]:
        return {j: (self.machine[j], self.start[j], self.completion[j]) for j in self.order}

    @property
    def makespan(self) -> float:
        return max(self.machine_finish) if self.machine_finish else 0.0

    @property
    def min_time(self) -> float:
        return min(self.machine_finish) if self.machine_finish else 0.0

    def machine_jobs(self, k: int) -> list[int]:
        """Jobs on machine ``k`` in start-time order."""
        jobs = [j for j in self.order if self.machine[j] == k]
        return sorted(jobs, key=lambda j: (self.start[j], j))

    def canonical_key(self) -> tuple:
        return (self.machine_finish, self.machine)


def extend(sub: Subschedule, job: int, instance: ProblemInstance) -> Subschedule:
    """Place ``job`` on the earliest-finishing machine at its earliest start."""
    if sub.machine[job] >= 0:
        raise DuplicateJobError(f"job {job} already placed")
    finish = sub.machine_finish
    k = finish.index(min(finish))
    st = finish[k]
    machine = sub.machine
    completion = sub.completion
    for other in instance.neighbours[job]:
        if machine[other] >= 0 and completion[other] > st:
            st = completion[other]
    ct = st + instance.lengths[job]
    return Subschedule(
        machine[:job] + (k,) + machine[job + 1:],
        sub.start[:job] + (st,) + sub.start[job + 1:],
        completion[:job] + (ct,) + completion[job + 1:],
        finish[:k] + (ct,) + finish[k + 1:],
        sub.machine_last[:k] + (job,) + sub.machine_last[k + 1:],
        sub.order + (job,),
    )


def check_permutation(perm: Sequence[int], n: int) -> tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if len(perm) != n or sorted(perm) != list(range(n)):
        raise InvalidPermutationError(f"{perm} is not a permutation of 0..{n - 1}")
    return perm


def derive(instance: ProblemInstance, perm: Sequence[int]) -> Subschedule:
    perm = check_permutation(perm, instance.n)
    sub = Subschedule.empty(instance)
    for job in perm:
        sub = extend(sub, job, instance)
    return sub


def metrics(sub: Subschedule) -> ScheduleMetrics:
    return ScheduleMetrics(sub.makespan, sub.min_time)


def dominates(a: Subschedule, b: Subschedule) -> bool:
    """True when ``a`` and ``b`` cover the same jobs and a's makespan is at most b's minimum time."""
    return a.mask == b.mask and a.makespan <= b.min_time


def equivalent(a: Subschedule, b: Subschedule) -> bool:
    if a.mask != b.mask or a.last_jobs != b.last_jobs:
        return False
    return all(a.completion[j] == b.completion[j] for j in a.order)


def equivalence_key(sub: Subschedule) -> tuple:
    """Hashable key such that equal keys <=> ``equivalent`` for a fixed instance."""
    ct = tuple(sub.completion[j] if sub.machine[j] >= 0 else -1.0 for j in range(len(sub.machine)))
    return (sub.last_jobs, ct)
