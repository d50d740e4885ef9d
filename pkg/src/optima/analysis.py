"""Experiment harnesses: search-space ratios over conflict parity, and solver accuracy/duration."""
from __future__ import annotations

import csv
import io
import math
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import InstanceConfig, ProblemInstance, generate_instance
from .solvers import Cooling, SaParams, all_makespans, solve_dp, solve_exhaustive, solve_sa

DEFAULT_THRESHOLDS = (0.0, 0.01, 0.05, 0.10, 0.20)
MAX_ANALYSIS_JOBS = 10

ANALYSIS_HEADER = ["n", "m", "mu", "sigma", "cp", "threshold", "ratio"]
EVALUATION_HEADER = ["n", "m", "cp", "mu", "sigma", "solver", "params", "accuracy", "mean_ms"]


def derived_seed(seed: int, *keys: int) -> int:
    """Independent 63-bit seed for a named sub-stream of ``seed``."""
    words = np.random.SeedSequence([seed, *keys]).generate_state(2, dtype=np.uint32)
    return (int(words[0]) << 31) ^ int(words[1])


def cp_grid(points: int) -> tuple[float, ...]:
    return tuple(float(x) for x in np.linspace(0.0, 1.0, points))


def _fmt(x: float) -> str:
    return repr(float(x))


# search-space analysis --------------------------------------------------

@dataclass(frozen=True)
class AnalysisCurve:
    n: int
    m: int
    mu: float
    sigma: float
    cp_grid: tuple[float, ...]
    thresholds: tuple[float, ...]
    ratios: np.ndarray = field(compare=False)  # (len(cp_grid), len(thresholds))
    # per grid point, per instance, per threshold: permutations within the threshold
    counts: np.ndarray = field(compare=False, repr=False)

    @property
    def optimal_ratio(self) -> np.ndarray:
        return self.ratios[:, 0]

    def rows(self):
        for p, cp in enumerate(self.cp_grid):
            for t, thr in enumerate(self.thresholds):
                yield [self.n, self.m, _fmt(self.mu), _fmt(self.sigma), _fmt(cp), _fmt(thr),
                       _fmt(self.ratios[p, t])]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ANALYSIS_HEADER)
        writer.writerows(self.rows())
        return buf.getvalue()


def _instance_counts(args) -> np.ndarray:
    config, thresholds = args
    inst = generate_instance(config)
    ms = all_makespans(inst)
    opt = ms.min()
    return np.array([np.count_nonzero(ms <= (1.0 + t) * opt) for t in thresholds], dtype=np.int64)


def analyze_search_space(n: int, m: int, mu: float, sigma: float, cp_values: Sequence[float],
                         instances_per_point: int, thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
                         seed: int = 0, workers: int = 1) -> AnalysisCurve:
    """Fraction of all n! permutations whose makespan is within each threshold of the optimum.

    Ratios are averaged arithmetically over ``instances_per_point`` random
    instances at each conflict parity.
    """
    if n > MAX_ANALYSIS_JOBS:
        raise ValueError(f"n={n} is too large to enumerate (limit {MAX_ANALYSIS_JOBS})")
    if n < 2:
        raise ValueError("analysis needs at least two jobs")
    thresholds = tuple(float(t) for t in thresholds)
    if not thresholds or thresholds[0] != 0.0 or list(thresholds) != sorted(thresholds):
        raise ValueError("thresholds must be ascending and start at 0")
    cp_values = tuple(float(c) for c in cp_values)
    tasks = [
        (InstanceConfig(n, m, mu, sigma, cp, derived_seed(seed, p, k)), thresholds)
        for p, cp in enumerate(cp_values)
        for k in range(instances_per_point)
    ]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_instance_counts, tasks, chunksize=8))
    else:
        results = [_instance_counts(t) for t in tasks]
    counts = np.array(results, dtype=np.int64).reshape(len(cp_values), instances_per_point, len(thresholds))
    ratios = (counts / math.factorial(n)).mean(axis=1)
    return AnalysisCurve(n, m, float(mu), float(sigma), cp_values, thresholds, ratios, counts)


# solver evaluation ------------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    n: int
    m: int
    cp: float
    mu: float = 1000.0
    sigma: float = 100.0


@dataclass(frozen=True)
class SolverSpec:
    name: str  # "es", "dp" or "sa"
    sa: SaParams | None = None

    @property
    def params(self) -> str:
        return self.sa.describe() if self.sa is not None else ""

    def run(self, instance: ProblemInstance, seed: int):
        if self.name == "dp":
            return solve_dp(instance)
        if self.name == "es":
            return solve_exhaustive(instance)
        if self.name == "sa":
            return solve_sa(instance, replace(self.sa or SaParams(), rng_seed=seed))
        raise ValueError(f"unknown solver {self.name!r}")


@dataclass(frozen=True)
class EvaluationRow:
    config: EvalConfig
    solver: str
    params: str
    accuracy: float
    mean_ms: float
    instances: int

    def as_row(self) -> list:
        c = self.config
        return [c.n, c.m, _fmt(c.cp), _fmt(c.mu), _fmt(c.sigma), self.solver, self.params,
                _fmt(self.accuracy), f"{self.mean_ms:.3f}"]


def evaluate_solvers(configs: Sequence[EvalConfig], solver_specs: Sequence[SolverSpec],
                     instances_per_config: int, seed: int = 0) -> list[EvaluationRow]:
    """Accuracy is the share of instances where a solver matches the exhaustive optimum exactly."""
    rows = []
    for ci, cfg in enumerate(configs):
        hits = [0] * len(solver_specs)
        times: list[list[float]] = [[] for _ in solver_specs]
        for k in range(instances_per_config):
            inst = generate_instance(InstanceConfig(cfg.n, cfg.m, cfg.mu, cfg.sigma, cfg.cp,
                                                    derived_seed(seed, ci, k)))
            optimum = solve_exhaustive(inst).best_makespan
            for si, spec in enumerate(solver_specs):
                t0 = time.perf_counter()
                result = spec.run(inst, derived_seed(seed, ci, k, si + 1))
                times[si].append(time.perf_counter() - t0)
                hits[si] += result.best_makespan == optimum
        for si, spec in enumerate(solver_specs):
            rows.append(EvaluationRow(cfg, spec.name, spec.params, hits[si] / instances_per_config,
                                      1e3 * statistics.fmean(times[si]), instances_per_config))
    return rows


def evaluation_csv(rows: Sequence[EvaluationRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVALUATION_HEADER)
    writer.writerows(r.as_row() for r in rows)
    return buf.getvalue()


def accuracy_solvers() -> list[SolverSpec]:
    """DP plus eight annealing settings: T in {50, 100} crossed with linear 0.1 / 0.01 and geometric 0.9 / 0.99."""
    specs = [SolverSpec("dp")]
    for t_max in (50.0, 100.0):
        for cooling in (Cooling.linear(0.1), Cooling.linear(0.01), Cooling.geometric(0.9), Cooling.geometric(0.99)):
            specs.append(SolverSpec("sa", SaParams(t_max, cooling)))
    return specs


def accuracy_configs(ns=(8, 9, 10), ms=(3, 4), cps=(0.2, 0.4, 0.6, 0.8)) -> list[EvalConfig]:
    return [EvalConfig(n, m, cp) for n in ns for m in ms for cp in cps]


EVAL_PRESETS = {
    "full": dict(configs=accuracy_configs(), instances=1000),
    "desk": dict(configs=accuracy_configs(ns=(8, 9)), instances=10),
    "smoke": dict(configs=accuracy_configs(ns=(6,), cps=(0.2, 0.6)), instances=5),
}
