import csv
import io
import json
from dataclasses import replace

import pytest

from optima.bench import (BENCH_PRESETS, COMPARISON_HEADER, BenchConfig, Comparison, PlannedLengthEstimator,
                          assembly_template, category_counts, compare_optimized, comparison_csv, generate_jobs,
                          improvement, run_benchmark)
from optima.bench.factory import CONFLICT_LEVELS, DURATIONS_MS, Action, ActionKind, expected_seconds

SMOKE = BENCH_PRESETS["smoke"]


def test_action_categories():
    assert {k.category for k in ActionKind} == {"manual", "drill", "weld"}
    assert sum(k.category == "manual" for k in ActionKind) == 5


def test_job_generation_is_deterministic():
    cfg = BenchConfig(job_count=30, seed=4)
    assert generate_jobs(cfg) == generate_jobs(cfg)
    assert generate_jobs(cfg) != generate_jobs(replace(cfg, seed=5))


def test_job_shape():
    cfg = BenchConfig(job_count=200)
    for job in generate_jobs(cfg):
        assert 2 <= len(job.operations) <= 5
        assert all(2 <= len(op) <= 4 for op in job.operations)
        assert all(a.duration_ms > 0 for op in job.operations for a in op)


@pytest.mark.parametrize("level", sorted(CONFLICT_LEVELS))
def test_category_propensities(level):
    counts = category_counts(generate_jobs(BenchConfig(job_count=1500, conflict_level=level, seed=1)))
    total = sum(counts.values())
    weights = CONFLICT_LEVELS[level]
    for cat, w in zip(("manual", "drill", "weld"), weights):
        assert counts[cat] / total == pytest.approx(w / sum(weights), abs=0.015)


def test_mean_durations():
    jobs = generate_jobs(BenchConfig(job_count=1000, conflict_level="high", seed=2))
    manual = [a.duration_ms for j in jobs for op in j.operations for a in op if a.kind.category == "manual"]
    transport = [j.transport_ms for j in jobs]
    assert sum(manual) / len(manual) == pytest.approx(DURATIONS_MS["manual"], rel=0.02)
    assert sum(transport) / len(transport) == pytest.approx(DURATIONS_MS["transport"], rel=0.02)


def test_assembly_template_names():
    a = lambda kind: Action(kind, 1.0)
    assert assembly_template((a(ActionKind.MANUAL_1), a(ActionKind.MANUAL_3))) == "assemble[manual]"
    assert assembly_template((a(ActionKind.MANUAL_1), a(ActionKind.WELD_2))) == "assemble[weld]"
    assert assembly_template((a(ActionKind.WELD_1), a(ActionKind.DRILL_2))) == "assemble[drill+weld]"


def test_planned_estimator_learns_ratio():
    est = PlannedLengthEstimator(speed=10.0)
    params = {"kinds": ("manual_1", "drill_1")}
    planned = expected_seconds("assemble[drill]", params, 10.0)
    assert planned == pytest.approx(0.05)
    assert est.estimate("assemble[drill]", params) == pytest.approx(planned)
    est.observe("assemble[drill]", 2 * planned, params)
    assert est.estimate("assemble[drill]", {"kinds": ("drill_2",)}) == pytest.approx(2 * 0.03)


def test_config_validation_and_round_trip():
    with pytest.raises(ValueError):
        BenchConfig(conflict_level="extreme")
    with pytest.raises(ValueError):
        BenchConfig(initial_counts=(30, 7, 7))
    cfg = BenchConfig.full_scale(conflict_level="high")
    assert cfg.threads == 8 and cfg.job_count == 500 and cfg.max_counts == (120, 50, 50)
    assert BenchConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_improvement_formula():
    assert improvement(100.0, 118.0) == pytest.approx(18.0)
    assert improvement(50.0, 45.0) == pytest.approx(-10.0)


@pytest.mark.parametrize("optimization", [False, True])
def test_smoke_run_is_consistent(optimization):
    run = run_benchmark(SMOKE, optimization=optimization)
    assert run.consistent
    assert run.jobs_completed == SMOKE.job_count
    assert run.engine["halted"]
    assert run.throughput > 0


def test_high_conflict_run_is_consistent():
    run = run_benchmark(replace(SMOKE, conflict_level="very_high", job_count=10), optimization=True)
    assert run.consistent and run.overlapping_intervals == 0


def test_throughput_grows_with_speed():
    slow = run_benchmark(replace(SMOKE, speed=5.0, job_count=10))
    fast = run_benchmark(replace(SMOKE, speed=40.0, job_count=10))
    assert fast.throughput > 2 * slow.throughput


def test_comparison_csv_layout():
    cmp = compare_optimized(replace(SMOKE, job_count=6), batch_sizes=(5,), triggers=(False, True), repetitions=2)
    assert isinstance(cmp, Comparison)
    assert len(cmp.baseline) == 2 and set(cmp.optimized) == {(5, False), (5, True)}
    # both arms ran on the same job sets
    assert [r.config.seed for r in cmp.baseline] == [r.config.seed for r in cmp.optimized[cmp.best]]
    rows = list(csv.reader(io.StringIO(comparison_csv([cmp]))))
    assert rows[0] == COMPARISON_HEADER and len(rows) == 2
    mins, maxs, mean = (float(x) for x in rows[1][-3:])
    assert mins <= mean <= maxs
    dump = json.loads(cmp.to_json())
    assert dump["best"]["batch_size"] == 5 and len(dump["optimized"]) == 2
