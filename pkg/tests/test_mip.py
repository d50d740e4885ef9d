import json

import pytest
from hypothesis import given

from optima.core import InstanceConfig, ProblemInstance, derive, generate_instance
from optima.solvers import build_mip, emit_mip, parse_lp, schedule_to_solution, solve_exhaustive, validate_mip_solution
from optima.solvers.mip import load_solution
from strategies import instance_and_perm


def test_model_size_n3_m2():
    inst = ProblemInstance(2, [1, 2, 3], [(0, 2)])
    model = build_mip(inst)
    assert len(model.variables) == 1 + 3 + 3 * 2 + 3 * 2 == 16
    sizes = {tag: len(model.family(tag)) for tag in ("c4", "c5", "c6", "c7", "c8")}
    assert sizes == {"c4": 3, "c5": 3, "c6": 6, "c7": 6, "c8": 1}
    assert model.big_m == 6.0


def test_model_single_job():
    model, text = emit_mip(ProblemInstance(3, [4.0]))
    assert [c.name for c in model.constraints] == ["c4_0", "c5_0"]
    assert "Minimize" in text and "Subject To" in text and text.rstrip().endswith("End")
    ok, bad = validate_mip_solution(ProblemInstance(3, [4.0]), [[1, 0, 0]], [0.0], 4.0)
    assert ok and not bad


def test_cp1_has_full_c8_family():
    inst = ProblemInstance(2, [1, 2, 3], [(0, 1), (0, 2), (1, 2)])
    model = build_mip(inst)
    assert len(model.family("c8")) == 3
    sol = schedule_to_solution(solve_exhaustive(inst).best_schedule, 2)
    assert sol["ms"] == 6
    assert validate_mip_solution(inst, sol["x"], sol["s"], sol["ms"])[0]


def test_lp_text_layout():
    _, text = emit_mip(ProblemInstance(2, [1.5, 2.0], [(0, 1)]), big_m=10.0)
    assert " c4_0: ms - s_0 >= 1.5" in text
    assert " c6_0_1: s_0 - s_1 - 10.0 pre_0_1 >= -8.0" in text
    assert " c7_1_0_0: pre_1_0 + pre_0_1 - x_1_0 - x_0_0 >= -1.0" in text
    assert " c8_1_0: pre_1_0 + pre_0_1 >= 1.0" in text


@given(instance_and_perm(min_n=1, max_n=6, integer_lengths=False))
def test_round_trip_and_derived_schedules_validate(case):
    inst, perm = case
    model, text = emit_mip(inst)
    assert parse_lp(text) == model
    sol = schedule_to_solution(derive(inst, perm), inst.m)
    ok, bad = validate_mip_solution(inst, sol["x"], sol["s"], sol["ms"], model.big_m)
    assert ok, bad


def test_overlapping_conflicting_jobs_rejected():
    inst = ProblemInstance(2, [4, 3], [(0, 1)])
    ok, bad = validate_mip_solution(inst, [[1, 0], [0, 1]], [0.0, 2.0], 5.0)
    assert not ok
    assert any(v.startswith("c8_1_0") for v in bad)


def test_job_on_two_machines_rejected():
    inst = ProblemInstance(2, [4, 3])
    ok, bad = validate_mip_solution(inst, [[1, 1], [0, 1]], [0.0, 4.0], 7.0)
    assert not ok and any(v.startswith("c5_0") for v in bad)


def test_same_machine_overlap_rejected():
    inst = ProblemInstance(2, [4, 3])
    ok, bad = validate_mip_solution(inst, [[1, 0], [1, 0]], [0.0, 1.0], 4.0)
    assert not ok and any(v.startswith("c7_1_0_0") for v in bad)


def test_wrong_objective_rejected():
    inst = ProblemInstance(2, [4, 3])
    ok, bad = validate_mip_solution(inst, [[1, 0], [0, 1]], [0.0, 0.0], 9.0)
    assert not ok and any(v.startswith("objective") for v in bad)


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        validate_mip_solution(ProblemInstance(2, [1, 1]), [[1, 0]], [0.0, 0.0], 1.0)


def test_solution_json_round_trip():
    inst = generate_instance(InstanceConfig(6, 3, conflict_parity=0.4, rng_seed=3))
    sol = schedule_to_solution(solve_exhaustive(inst).best_schedule, 3)
    x, s, ms = load_solution(json.dumps(sol))
    assert validate_mip_solution(inst, x, s, ms)[0]
