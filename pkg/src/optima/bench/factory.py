"""Factory-floor simulation run on the transaction engine.

Jobs are sequences of assembly operations; each operation is a set of timed
actions and runs as one transaction.  Assembled parts are transported to
inspection and finish in the output bin.  Drilling, welding and QA scanning
need exclusive plugins, so the action mix controls how much transactions
block each other.

Action durations are drawn once per job set, so two runs over the same seed
do exactly the same work; only the engine's dispatching differs.
"""
from __future__ import annotations

import enum
import itertools
import json
import statistics
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..engine import (Engine, EngineParams, LengthEstimator, PluginDescriptor, RoleDescriptor, Spawn,
                      SystemDefinition, TransactionTemplate, overlapping_intervals)
from ..engine.scheduler import ENGINE_SA_PARAMS
from ..solvers import SaParams


class ActionKind(enum.Enum):
    MANUAL_1 = "manual_1"
    MANUAL_2 = "manual_2"
    MANUAL_3 = "manual_3"
    MANUAL_4 = "manual_4"
    MANUAL_5 = "manual_5"
    DRILL_1 = "drill_1"
    DRILL_2 = "drill_2"
    WELD_1 = "weld_1"
    WELD_2 = "weld_2"

    @property
    def category(self) -> str:
        return self.value.split("_")[0]


CATEGORIES = ("manual", "drill", "weld")
KINDS_BY_CATEGORY = {c: tuple(k for k in ActionKind if k.category == c) for c in CATEGORIES}

# (manual, drilling, welding) draw weights
CONFLICT_LEVELS = {
    "very_low": (20, 1, 1),
    "low": (10, 1, 1),
    "medium": (5, 1, 1),
    "high": (1, 1, 1),
    "very_high": (1, 2, 2),
}

# mean durations at 1x speed in milliseconds; standard deviation is 20% of the mean
DURATIONS_MS = {"manual": 200.0, "drill": 300.0, "weld": 400.0, "transport": 150.0, "inspection": 250.0}
DURATION_CV = 0.2

# plugin ids; locks are taken in ascending id order
ASSEMBLY_QUEUE, CONVEYOR, INSPECTION_QUEUE, OUTPUT_BIN, DRILL_PRESS, WELDING_STATION, QA_SCANNER = range(7)
WORKER, TRANSPORTER, INSPECTOR, MANAGER = "assembly_worker", "transporter", "inspector", "floor_manager"
STAGE_ROLES = (WORKER, TRANSPORTER, INSPECTOR)


@dataclass(frozen=True)
class BenchConfig:
    """One factory-floor configuration.

    The defaults are the desk scale used in CI; :meth:`full_scale` gives the
    large setting (8 threads, 500 jobs, 100/35/35 agents).
    """

    threads: int = 4
    speed: float = 20.0
    conflict_level: str = "very_low"
    job_count: int = 100
    batch_size: int = 50
    trigger: bool = False
    initial_counts: tuple[int, int, int] = (20, 7, 7)
    max_counts: tuple[int, int, int] = (24, 10, 10)
    seed: int = 0
    ops_per_job: tuple[int, int] = (2, 5)
    actions_per_op: tuple[int, int] = (2, 4)
    tick_ms: float = 500.0

    def __post_init__(self):
        if self.job_count < 1:
            raise ValueError("job_count must be at least 1")
        if self.conflict_level not in CONFLICT_LEVELS:
            raise ValueError(f"unknown conflict level {self.conflict_level!r}; pick from {sorted(CONFLICT_LEVELS)}")
        if not self.speed > 0:
            raise ValueError("speed must be positive")
        for lo, hi in (self.ops_per_job, self.actions_per_op):
            if not 1 <= lo <= hi:
                raise ValueError("ranges need 1 <= low <= high")
        for init, cap in zip(self.initial_counts, self.max_counts):
            if not 0 < init <= cap:
                raise ValueError("agent counts need 0 < initial <= max")

    @classmethod
    def full_scale(cls, **overrides) -> "BenchConfig":
        base = dict(threads=8, speed=2.0, job_count=500, initial_counts=(100, 35, 35), max_counts=(120, 50, 50))
        return cls(**{**base, **overrides})

    @classmethod
    def from_dict(cls, data) -> "BenchConfig":
        data = dict(data)
        for key in ("initial_counts", "max_counts", "ops_per_job", "actions_per_op"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


BENCH_PRESETS = {
    "desk": BenchConfig(),
    "full": BenchConfig.full_scale(),
    "smoke": BenchConfig(job_count=20, speed=40.0),
}


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    duration_ms: float  # at 1x speed


@dataclass(frozen=True)
class Job:
    job_id: int
    operations: tuple[tuple[Action, ...], ...]
    transport_ms: float
    inspection_ms: float


def _duration(rng: np.random.Generator, mean: float) -> float:
    while True:
        d = float(rng.normal(mean, DURATION_CV * mean))
        if d > 0:
            return d


def generate_jobs(config: BenchConfig) -> list[Job]:
    """Random job set, reproducible from ``config.seed``."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x10B5]))
    weights = np.array(CONFLICT_LEVELS[config.conflict_level], dtype=float)
    weights /= weights.sum()
    jobs = []
    for j in range(config.job_count):
        ops = []
        for _ in range(rng.integers(config.ops_per_job[0], config.ops_per_job[1] + 1)):
            actions = []
            for _ in range(rng.integers(config.actions_per_op[0], config.actions_per_op[1] + 1)):
                cat = CATEGORIES[rng.choice(3, p=weights)]
                kinds = KINDS_BY_CATEGORY[cat]
                kind = kinds[rng.integers(len(kinds))]
                actions.append(Action(kind, _duration(rng, DURATIONS_MS[cat])))
            ops.append(tuple(actions))
        jobs.append(Job(j, tuple(ops), _duration(rng, DURATIONS_MS["transport"]),
                        _duration(rng, DURATIONS_MS["inspection"])))
    return jobs


def category_counts(jobs) -> dict[str, int]:
    counts = dict.fromkeys(CATEGORIES, 0)
    for job in jobs:
        for op in job.operations:
            for a in op:
                counts[a.kind.category] += 1
    return counts


def assembly_template(op) -> str:
    cats = {a.kind.category for a in op}
    name = "+".join(c for c in ("drill", "weld") if c in cats) or "manual"
    return f"assemble[{name}]"


def expected_seconds(template_id: str, params, speed: float) -> float:
    """Duration implied by mean action times, the knowledge a floor planner has before running."""
    if template_id.startswith("assemble"):
        total = sum(DURATIONS_MS[KIND_CATEGORY[k]] for k in params["kinds"])
    elif template_id == "transport":
        total = DURATIONS_MS["transport"]
    elif template_id == "inspect":
        total = DURATIONS_MS["inspection"]
    else:
        return 1e-4
    return total / speed / 1e3


KIND_CATEGORY = {k.value: k.category for k in ActionKind}


class PlannedLengthEstimator(LengthEstimator):
    """Mean-duration estimate corrected by the observed/expected ratio per template."""

    def __init__(self, speed: float):
        super().__init__(prior=1.0)
        self.speed = speed

    def estimate(self, template_id, params=None):
        expected = expected_seconds(template_id, params or {}, self.speed)
        return expected * super().estimate(template_id)

    def observe(self, template_id, length, params=None):
        expected = expected_seconds(template_id, params or {}, self.speed)
        super().observe(template_id, length / expected)


class Station:
    """A shareable plugin holding job ids (queues, conveyor, output bin)."""

    def __init__(self, name: str):
        self.name = name
        self.items: deque[int] = deque()
        self._lock = threading.Lock()

    def __call__(self, ctx, verb: str, job: int | None = None):
        with self._lock:
            if verb == "put":
                self.items.append(job)
            elif verb == "take":
                try:
                    self.items.remove(job)
                except ValueError:
                    ctx.abort(f"job {job} is not on {self.name}")
            elif verb != "size":
                raise ValueError(verb)
            return len(self.items)


@dataclass
class FloorState:
    config: BenchConfig
    jobs: list[Job]
    stations: dict[int, Station]
    completed: int = 0
    reports: int = 0
    next_tick: float = 0.0
    tick_pending: bool = False
    manager_actions: dict[str, int] = field(default_factory=lambda: {"create": 0, "start": 0, "stop": 0})
    started_at: float = 0.0
    finished_at: float | None = None
    max_running: dict[str, int] = field(default_factory=dict)


def build_floor(config: BenchConfig, params: EngineParams):
    jobs = generate_jobs(config)
    stations = {pid: Station(name) for pid, name in ((ASSEMBLY_QUEUE, "assembly queue"), (CONVEYOR, "conveyor belt"),
                                                     (INSPECTION_QUEUE, "inspection queue"), (OUTPUT_BIN, "output bin"))}
    state = FloorState(config, jobs, stations)
    scale = 1.0 / config.speed / 1e3  # milliseconds at 1x -> seconds

    plugins = [PluginDescriptor(pid, st.name, True, operation=st) for pid, st in stations.items()]
    plugins += [PluginDescriptor(DRILL_PRESS, "drill press", False), PluginDescriptor(WELDING_STATION, "welding station", False),
                PluginDescriptor(QA_SCANNER, "QA scanner", False)]
    (w0, t0, i0), (wm, tm, im) = config.initial_counts, config.max_counts
    roles = [
        RoleDescriptor(WORKER, plugin_permissions=frozenset({ASSEMBLY_QUEUE, CONVEYOR, DRILL_PRESS, WELDING_STATION}),
                       initial_count=w0, max_count=wm),
        RoleDescriptor(TRANSPORTER, plugin_permissions=frozenset({CONVEYOR, INSPECTION_QUEUE}), initial_count=t0, max_count=tm),
        RoleDescriptor(INSPECTOR, plugin_permissions=frozenset({INSPECTION_QUEUE, QA_SCANNER, OUTPUT_BIN}),
                       initial_count=i0, max_count=im),
        RoleDescriptor(MANAGER, supervisor_of=frozenset(STAGE_ROLES),
                       plugin_permissions=frozenset({ASSEMBLY_QUEUE, CONVEYOR, INSPECTION_QUEUE, OUTPUT_BIN}),
                       can_halt=True, initial_count=1, max_count=1),
    ]

    def assemble(ctx):
        job = jobs[ctx.params["job"]]
        op_index = ctx.params["op"]
        ctx.use_plugin(ASSEMBLY_QUEUE, "size")
        for action in job.operations[op_index]:
            cat = action.kind.category
            if cat == "drill":
                ctx.use_plugin(DRILL_PRESS)
            elif cat == "weld":
                ctx.use_plugin(WELDING_STATION)
            ctx.sleep(action.duration_ms * scale)
        if op_index == len(job.operations) - 1:
            ctx.use_plugin(ASSEMBLY_QUEUE, "take", job.job_id)
            ctx.use_plugin(CONVEYOR, "put", job.job_id)
            return {"assembled": True}
        return None

    def unassemble(ctx, result):
        # rollback: a finished part that was moved to the conveyor goes back
        if result.params.get("assembled"):
            stations[CONVEYOR](ctx, "take", ctx.params["job"])
            stations[ASSEMBLY_QUEUE](ctx, "put", ctx.params["job"])

    def transport(ctx):
        job = jobs[ctx.params["job"]]
        ctx.use_plugin(CONVEYOR, "take", job.job_id)
        ctx.sleep(job.transport_ms * scale)
        ctx.use_plugin(INSPECTION_QUEUE, "put", job.job_id)

    def inspect(ctx):
        job = jobs[ctx.params["job"]]
        ctx.use_plugin(INSPECTION_QUEUE, "take", job.job_id)
        ctx.use_plugin(QA_SCANNER)
        ctx.sleep(job.inspection_ms * scale)
        ctx.use_plugin(OUTPUT_BIN, "put", job.job_id)
        manager = ctx.engine.agents.pick(MANAGER)
        if manager is not None:
            ctx.send(manager, {"job": job.job_id, "passed": True})

    def tick(ctx):
        engine = ctx.engine
        state.reports += len(ctx.inbox())
        backlog = {
            WORKER: ctx.use_plugin(ASSEMBLY_QUEUE, "size"),
            TRANSPORTER: ctx.use_plugin(CONVEYOR, "size"),
            INSPECTOR: ctx.use_plugin(INSPECTION_QUEUE, "size"),
        }
        agents = engine.agents
        for role in STAGE_ROLES:
            with agents._lock:
                members = sorted((a.agent_id, a.running) for a in agents.agents.values() if a.role_id == role)
            running = [a for a, r in members if r]
            stopped = [a for a, r in members if not r]
            if backlog[role] > len(running):
                if stopped:
                    ctx.start_agent(stopped[0])
                    state.manager_actions["start"] += 1
                elif len(members) + agents.reserved[role] < engine.system.roles[role].max_count:
                    ctx.create_agent(role)
                    state.manager_actions["create"] += 1
            elif 2 * backlog[role] < len(running) and len(running) > 1:
                ctx.stop_agent(running[-1])
                state.manager_actions["stop"] += 1

    def halt(ctx):
        ctx.request_halt()

    def maybe_tick(spawns):
        now = time.perf_counter()
        if not state.tick_pending and now >= state.next_tick and state.completed < len(jobs):
            state.tick_pending = True
            spawns.append(Spawn("tick", owner_role=MANAGER))
        return spawns

    def after_assemble(result):
        job = jobs[result.params["job"]]
        if not result.committed:
            return maybe_tick([_assembly_spawn(job, result.params["op"])])
        if result.params["op"] + 1 < len(job.operations):
            return maybe_tick([_assembly_spawn(job, result.params["op"] + 1)])
        return maybe_tick([Spawn("transport", {"job": job.job_id}, owner_role=TRANSPORTER)])

    def after_transport(result):
        job = result.params["job"]
        nxt = "inspect" if result.committed else "transport"
        return maybe_tick([Spawn(nxt, {"job": job}, owner_role=INSPECTOR if result.committed else TRANSPORTER)])

    def after_inspect(result):
        if not result.committed:
            return maybe_tick([Spawn("inspect", {"job": result.params["job"]}, owner_role=INSPECTOR)])
        state.completed += 1
        if state.completed == len(jobs):
            state.finished_at = time.perf_counter()
            return [Spawn("halt", owner_role=MANAGER)]
        return maybe_tick([])

    def after_tick(result):
        state.tick_pending = False
        state.next_tick = time.perf_counter() + config.tick_ms * scale
        return []

    def after_halt(result):
        # a rejected halt is retried; the engine stops on the committed one
        return [] if result.committed else [Spawn("halt", owner_role=MANAGER)]

    base_plugins = frozenset({ASSEMBLY_QUEUE, CONVEYOR})
    templates = [
        TransactionTemplate("transport", transport, frozenset({CONVEYOR, INSPECTION_QUEUE}), result_mapper=after_transport),
        TransactionTemplate("inspect", inspect, frozenset({INSPECTION_QUEUE, QA_SCANNER, OUTPUT_BIN}),
                            result_mapper=after_inspect),
        TransactionTemplate("tick", tick, frozenset({ASSEMBLY_QUEUE, CONVEYOR, INSPECTION_QUEUE}), result_mapper=after_tick),
        TransactionTemplate("halt", halt, result_mapper=after_halt),
    ]
    for name, extra in (("manual", ()), ("drill", (DRILL_PRESS,)), ("weld", (WELDING_STATION,)),
                        ("drill+weld", (DRILL_PRESS, WELDING_STATION))):
        templates.append(TransactionTemplate(f"assemble[{name}]", assemble, base_plugins | frozenset(extra),
                                             on_abort=unassemble, result_mapper=after_assemble))
    system = SystemDefinition.build(plugins, roles, templates, params)

    for job in jobs:
        stations[ASSEMBLY_QUEUE].items.append(job.job_id)
    seeds = [_assembly_spawn(job, 0) for job in jobs]
    return system, seeds, state


def _assembly_spawn(job: Job, op_index: int) -> Spawn:
    op = job.operations[op_index]
    return Spawn(assembly_template(op), {"job": job.job_id, "op": op_index, "kinds": tuple(a.kind.value for a in op)},
                 owner_role=WORKER)


@dataclass
class BenchRun:
    config: BenchConfig
    optimization: bool
    throughput: float  # completed jobs per wall second
    wall_seconds: float
    jobs_completed: int
    jobs_generated: int
    engine: dict
    overlapping_intervals: int
    peak_agents: dict
    manager_actions: dict

    @property
    def consistent(self) -> bool:
        e = self.engine
        return (e["violations"] == 0 and e["order_violations"] == 0 and e["watchdog_flags"] == 0
                and self.overlapping_intervals == 0 and self.jobs_completed == self.jobs_generated
                and all(self.peak_agents[r] <= c for r, c in zip(STAGE_ROLES, self.config.max_counts)))


def run_benchmark(config: BenchConfig, optimization: bool = True, sa_params: SaParams = ENGINE_SA_PARAMS,
                  timeout: float | None = None, watchdog: float = 30.0) -> BenchRun:
    """Run one job set to completion and measure jobs completed per second."""
    params = EngineParams(optimization, config.threads, config.batch_size, config.trigger)
    system, seeds, state = build_floor(config, params)
    engine = Engine(system, estimator=PlannedLengthEstimator(config.speed),
                    sa_params=replace(sa_params, rng_seed=config.seed), watchdog=watchdog)
    state.started_at = time.perf_counter()
    state.next_tick = state.started_at
    report = engine.run(seeds, timeout=timeout)
    end = state.finished_at or time.perf_counter()
    wall = end - state.started_at
    clashes = sum(len(overlapping_intervals(ivs)) for ivs in engine.locks.intervals.values())
    return BenchRun(config, optimization, state.completed / wall, wall, state.completed, len(state.jobs),
                    asdict(report), clashes, dict(engine.agents.peak), dict(state.manager_actions))


# optimised vs baseline comparison ---------------------------------------

COMPARISON_HEADER = ["threads", "speed", "conflict_level", "baseline_throughput", "best_batch_size", "best_trigger",
                     "optimized_throughput", "min_improvement_pct", "max_improvement_pct", "mean_improvement_pct"]


def improvement(base: float, opt: float) -> float:
    return (opt - base) / base * 100.0


@dataclass
class Comparison:
    config: BenchConfig
    baseline: list[BenchRun]
    optimized: dict[tuple[int, bool], list[BenchRun]]
    best: tuple[int, bool]

    def improvements(self, setting: tuple[int, bool] | None = None) -> list[float]:
        runs = self.optimized[setting or self.best]
        return [improvement(b.throughput, o.throughput) for b, o in zip(self.baseline, runs)]

    def mean_throughput(self, runs) -> float:
        return statistics.fmean(r.throughput for r in runs)

    def row(self) -> list:
        imp = self.improvements()
        c = self.config
        return [c.threads, f"{c.speed:g}", c.conflict_level, f"{self.mean_throughput(self.baseline):.4f}",
                self.best[0], str(self.best[1]).lower(), f"{self.mean_throughput(self.optimized[self.best]):.4f}",
                f"{min(imp):.2f}", f"{max(imp):.2f}", f"{statistics.fmean(imp):.2f}"]

    def to_json(self) -> str:
        def run_dict(r: BenchRun):
            d = asdict(r)
            d.pop("config")
            d["seed"] = r.config.seed
            return d
        return json.dumps({
            "config": self.config.to_dict(),
            "best": {"batch_size": self.best[0], "trigger": self.best[1]},
            "baseline": [run_dict(r) for r in self.baseline],
            "optimized": [{"batch_size": b, "trigger": t, "runs": [run_dict(r) for r in runs],
                           "improvements_pct": self.improvements((b, t))}
                          for (b, t), runs in self.optimized.items()],
        }, indent=2)


def compare_optimized(config: BenchConfig, batch_sizes=(50, 75), triggers=(False, True), repetitions: int = 5,
                      sa_params: SaParams = ENGINE_SA_PARAMS, progress=None) -> Comparison:
    """Baseline and every (batch size, trigger) setting on the same ``repetitions`` job sets.

    Job set ``k`` uses seed ``config.seed + k`` in every arm.  The best setting
    is the one with the highest mean throughput.
    """
    seeds = [config.seed + k for k in range(repetitions)]
    baseline = []
    optimized: dict[tuple[int, bool], list[BenchRun]] = {s: [] for s in itertools.product(batch_sizes, triggers)}
    for seed in seeds:
        cfg = replace(config, seed=seed)
        baseline.append(run_benchmark(cfg, optimization=False, sa_params=sa_params))
        if progress:
            progress(baseline[-1])
        for b, t in optimized:
            optimized[(b, t)].append(run_benchmark(replace(cfg, batch_size=b, trigger=t), True, sa_params))
            if progress:
                progress(optimized[(b, t)][-1])
    best = max(optimized, key=lambda s: statistics.fmean(r.throughput for r in optimized[s]))
    return Comparison(config, baseline, optimized, best)


def comparison_csv(comparisons) -> str:
    lines = [",".join(COMPARISON_HEADER)]
    lines += [",".join(str(x) for x in c.row()) for c in comparisons]
    return "\n".join(lines) + "\n"
