import json
import threading
import time

import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from optima.core import ProblemInstance, derive
from optima.engine import (AbortTransaction, DefinitionError, Engine, EngineParams, LengthEstimator,
                           PluginDescriptor, RoleDescriptor, Spawn, Status, SystemDefinition, Transaction,
                           TransactionTemplate, build_conflict_matrix, check_event_log, load_system,
                           schedule_batch, system_from_dict)
from optima.engine.managers import Agent, AgentManager, PluginManager, Postmaster
from optima.solvers import Cooling, SaParams

PAYMENT, CALENDAR, DRILL, WELD, SCANNER, BELT = range(6)


def txn(i, locks=(), length=1.0):
    return Transaction(i, "t", (), {}, length, tuple(sorted(locks)))


def floor_system(params=None, templates=(), worker_max=3):
    plugins = [PluginDescriptor(DRILL, "drill", False), PluginDescriptor(WELD, "weld", False),
               PluginDescriptor(SCANNER, "scanner", False), PluginDescriptor(BELT, "belt", True),
               PluginDescriptor(PAYMENT, "payment", False), PluginDescriptor(CALENDAR, "calendar", False)]
    roles = [
        RoleDescriptor("manager", frozenset({"worker", "inspector", "transporter"}), frozenset({BELT}),
                       can_halt=True, initial_count=1, max_count=1),
        RoleDescriptor("worker", plugin_permissions=frozenset({DRILL, WELD, BELT}), initial_count=2,
                       max_count=worker_max),
        RoleDescriptor("inspector", plugin_permissions=frozenset({SCANNER}), initial_count=1, max_count=2),
        RoleDescriptor("transporter", plugin_permissions=frozenset({BELT}), initial_count=1, max_count=2),
    ]
    return SystemDefinition.build(plugins, roles, templates, params or EngineParams(threads=2, batch_size=4))


def ids(manager, role):
    return sorted(a.agent_id for a in manager.agents.values() if a.role_id == role)


# estimator and scheduling ---------------------------------------------------

def test_estimator_running_mean():
    est = LengthEstimator()
    assert est.estimate("A") == 1.0
    est.observe("A", 2.0)
    est.observe("A", 4.0)
    assert est.estimate("A") == 3.0
    est.observe("A", 6.0)
    assert est.estimate("A") == 4.0
    assert est.estimate("B") == 1.0


def test_conflict_matrix_examples():
    conf = build_conflict_matrix([txn(0, {PAYMENT, CALENDAR}), txn(1, {PAYMENT}), txn(2, {DRILL}),
                                  txn(3, {WELD}), txn(4)])
    assert conf[0, 1] and conf[1, 0]
    assert not conf[2, 3]
    assert not conf[4].any() and not conf[:, 4].any()
    assert not conf.diagonal().any()


def test_schedule_single_transaction():
    sched = schedule_batch([txn(0)], EngineParams(threads=2))
    assert [len(q) for q in sched.queues] == [1, 0]


def test_schedule_four_free_equal_jobs():
    sched = schedule_batch([txn(i, length=2.0) for i in range(4)], EngineParams(threads=2))
    assert sorted(len(q) for q in sched.queues) == [2, 2]
    assert sched.estimated_makespan == 4.0


def test_schedule_all_conflicting_serialises():
    batch = [txn(i, {DRILL}, length=1.0 + i) for i in range(5)]
    sched = schedule_batch(batch, EngineParams(threads=3))
    assert sched.estimated_makespan == sum(t.estimated_length for t in batch)


def test_schedule_without_optimisation():
    sched = schedule_batch([txn(0), txn(1)], EngineParams(optimization=False))
    assert sched.single_dispatch and sched.queues is None


def test_schedule_rejects_empty_batch():
    with pytest.raises(ValueError):
        schedule_batch([], EngineParams())


@given(st.lists(st.tuples(st.sets(st.integers(0, 4), max_size=3), st.floats(0.01, 10.0)), min_size=1, max_size=25),
       st.integers(1, 5))
@settings(max_examples=40)
def test_batch_conservation_and_queue_order(spec, m):
    batch = [txn(i, locks, length) for i, (locks, length) in enumerate(spec)]
    sched = schedule_batch(batch, EngineParams(threads=m), SaParams(5.0, Cooling.linear(0.5)))
    flat = [t.txn_id for q in sched.queues for t in q]
    assert sorted(flat) == list(range(len(batch)))
    assert len(sched.queues) == m
    # replaying the queues as a schedule can never beat the reported estimate's lower bound
    assert sched.estimated_makespan >= max(t.estimated_length for t in batch)


def test_warm_start_not_worse_than_arrival_order():
    batch = [txn(i, {i % 2}, length=1.0 + (i * 7) % 5) for i in range(12)]
    inst = ProblemInstance(3, [t.estimated_length for t in batch],
                           [(i, j) for i in range(12) for j in range(i + 1, 12) if i % 2 == j % 2])
    sched = schedule_batch(batch, EngineParams(threads=3))
    assert sched.estimated_makespan <= derive(inst, range(12)).makespan


# managers ------------------------------------------------------------------

@pytest.fixture
def managers():
    system = floor_system()
    agents = AgentManager(system)
    return system, agents, PluginManager(system), Postmaster(system, agents)


def test_plugin_access(managers):
    system, agents, plugins, _ = managers
    inspector = agents.get(ids(agents, "inspector")[0])
    transporter = agents.get(ids(agents, "transporter")[0])
    worker_a, worker_b = (agents.get(i) for i in ids(agents, "worker"))
    assert plugins.check_plugin_access(inspector, SCANNER)
    assert not plugins.check_plugin_access(transporter, DRILL)
    assert plugins.check_plugin_access(worker_a, BELT) and plugins.check_plugin_access(worker_b, BELT)
    with pytest.raises(DefinitionError):
        plugins.check_plugin_access(inspector, 99)


def test_plugin_access_via_authorised_roles():
    system = floor_system()
    system.plugins[DRILL] = PluginDescriptor(DRILL, "drill", False, frozenset({"transporter"}))
    agents = AgentManager(system)
    transporter = agents.get(ids(agents, "transporter")[0])
    assert PluginManager(system).check_plugin_access(transporter, DRILL)


def test_agent_manipulation(managers):
    _, agents, _, _ = managers
    boss = agents.get(ids(agents, "manager")[0])
    w = agents.get(ids(agents, "worker")[0])
    other = agents.get(ids(agents, "worker")[1])
    assert agents.check_agent_manipulation(boss, "create", "worker")
    assert agents.check_agent_manipulation(w, "stop", w)
    assert not agents.check_agent_manipulation(w, "stop", other)
    assert not agents.check_agent_manipulation(w, "start", w)
    assert not agents.check_agent_manipulation(w, "create", "worker")
    assert agents.check_agent_manipulation(boss, "destroy", other)
    # fill the role up to its maximum of 3
    new = agents.reserve("worker")
    agents.apply([("create", new, "worker")])
    assert not agents.check_agent_manipulation(boss, "create", "worker")
    assert agents.reserve("worker") is None


def test_communication(managers):
    _, agents, _, post = managers
    boss = agents.get(ids(agents, "manager")[0])
    inspector = agents.get(ids(agents, "inspector")[0])
    transporter = agents.get(ids(agents, "transporter")[0])
    w1, w2 = (agents.get(i) for i in ids(agents, "worker"))
    assert post.check_communication(inspector, boss)
    assert post.check_communication(w1, w2)
    assert not post.check_communication(transporter, inspector)


def test_explicit_pair_permission():
    system = floor_system()
    system.roles["transporter"] = RoleDescriptor("transporter", plugin_permissions=frozenset({BELT}),
                                                 comm_permissions=frozenset({"inspector"}), initial_count=1,
                                                 max_count=2)
    agents = AgentManager(system)
    post = Postmaster(system, agents)
    t = agents.get(ids(agents, "transporter")[0])
    i = agents.get(ids(agents, "inspector")[0])
    assert post.check_communication(t, i) and post.check_communication(i, t)


# engine --------------------------------------------------------------------

def halt_body(ctx):
    ctx.request_halt()


def test_validation_before_start():
    system = floor_system()
    system.roles["manager"] = RoleDescriptor("manager", initial_count=1, max_count=1)
    with pytest.raises(DefinitionError):
        Engine(system)


def test_duplicate_ids_rejected():
    with pytest.raises(DefinitionError):
        SystemDefinition.build([PluginDescriptor(1, "a", True), PluginDescriptor(1, "b", True)], [], [])


def test_immediate_halt():
    system = floor_system(templates=[TransactionTemplate("halt", halt_body)])
    report = Engine(system).run([Spawn("halt", owner_role="manager")])
    assert report.committed == 1 and report.aborted == 0 and report.halted


def test_unauthorised_halt_aborts_and_engine_continues():
    calls = []

    def mapper(result):
        calls.append(result.status)
        return [Spawn("halt", owner_role="manager")] if not result.committed else []

    system = floor_system(templates=[TransactionTemplate("halt", halt_body, result_mapper=mapper)])
    engine = Engine(system, keep_results=True)
    report = engine.run([Spawn("halt", owner_role="worker")])
    assert [r.status for r in engine.results] == [Status.ABORTED, Status.COMMITTED]
    assert "may not halt" in engine.results[0].reason
    assert report.halted and report.committed == 1 and report.aborted == 1


def test_abort_runs_hook_before_publication_and_discards_effects():
    order = []

    def body(ctx):
        ctx.create_agent("worker")
        ctx.send(ctx.engine.agents.pick("inspector"), "hello")
        raise AbortTransaction("changed my mind")

    def on_abort(ctx, result):
        order.append(("hook", result.txn_id))

    def mapper(result):
        order.append(("mapped", result.txn_id))
        return []

    system = floor_system(templates=[TransactionTemplate("t", body, on_abort=on_abort, result_mapper=mapper)])
    engine = Engine(system)
    report = engine.run([Spawn("t", owner_role="manager")])
    assert order == [("hook", 0), ("mapped", 0)]
    assert report.aborted == 1 and report.created_agents == 0
    assert engine.agents.counts()["worker"] == 2
    assert engine.agents.reserved["worker"] == 0
    assert engine.postmaster.delivered == 0


def test_commit_applies_buffered_effects():
    seen = {}

    def body(ctx):
        new = ctx.create_agent("worker")
        seen["during"] = new in ctx.engine.agents.agents
        ctx.send(ctx.engine.agents.pick("inspector"), "report")
        seen["new"] = new

    system = floor_system(templates=[TransactionTemplate("t", body)])
    engine = Engine(system)
    report = engine.run([Spawn("t", owner_role="manager")])
    assert report.committed == 1 and report.created_agents == 1
    assert seen["during"] is False and seen["new"] in engine.agents.agents
    assert engine.postmaster.delivered == 1


@pytest.mark.parametrize("owner, body, reason", [
    ("transporter", lambda ctx: ctx.use_plugin(DRILL), "may not use plugin"),
    ("worker", lambda ctx: ctx.use_plugin(WELD), "not declared"),
    ("transporter", lambda ctx: ctx.send(ctx.engine.agents.pick("inspector"), "x"), "may not message"),
    ("transporter", lambda ctx: ctx.stop_agent(ctx.engine.agents.pick("worker")), "may not stop"),
    ("transporter", lambda ctx: 1 / 0, "error"),
])
def test_constraint_violations_abort(owner, body, reason):
    # transporters hold no drill, cannot message inspectors and supervise nobody;
    # workers may weld but the template only declares the drill
    system = floor_system(templates=[TransactionTemplate("t", body, frozenset({DRILL}))])
    engine = Engine(system, keep_results=True)
    report = engine.run([Spawn("t", owner_role=owner)])
    assert report.aborted == 1 and report.violations == 0
    assert reason in engine.results[0].reason


def test_inspector_uses_declared_scanner():
    system = floor_system(templates=[TransactionTemplate("t", lambda ctx: ctx.use_plugin(SCANNER), frozenset({SCANNER}))])
    assert Engine(system).run([Spawn("t", owner_role="inspector")]).committed == 1


def test_self_stop_commits():
    system = floor_system(templates=[TransactionTemplate("t", lambda ctx: ctx.stop_agent(ctx.owner.agent_id))])
    engine = Engine(system)
    assert engine.run([Spawn("t", owner_role="worker")]).committed == 1
    assert engine.agents.counts(running_only=True)["worker"] == 1


def test_concurrent_creates_respect_maximum():
    def body(ctx):
        ctx.create_agent("worker")
        ctx.sleep(0.002)

    system = floor_system(EngineParams(optimization=False, threads=4),
                          templates=[TransactionTemplate("t", body)], worker_max=5)
    engine = Engine(system)
    report = engine.run([Spawn("t", owner_role="manager") for _ in range(12)])
    assert report.committed == 3 and report.aborted == 9
    assert engine.agents.counts()["worker"] == 5 and report.count_violations == 0


def test_halt_drains_and_aborts_queued_work():
    aborted = []

    def slow(ctx):
        ctx.sleep(0.02)

    def note_abort(ctx, result):
        aborted.append(result.reason)

    templates = [TransactionTemplate("slow", slow, on_abort=note_abort), TransactionTemplate("halt", halt_body)]
    system = floor_system(EngineParams(optimization=True, threads=1, batch_size=1), templates)
    engine = Engine(system, keep_results=True)
    seeds = [Spawn("halt", owner_role="manager")] + [Spawn("slow", owner_role="worker") for _ in range(5)]
    report = engine.run(seeds)
    assert report.halted
    assert report.shutdown_aborts == len(aborted) == report.aborted
    assert all(r == "shutdown" for r in aborted)
    assert report.committed + report.aborted == 6


def test_stops_when_work_runs_out():
    system = floor_system(templates=[TransactionTemplate("t", lambda ctx: None)])
    report = Engine(system).run([Spawn("t", owner_role="worker") for _ in range(7)])
    assert report.committed == 7 and not report.halted


def test_trigger_off_waits_for_full_batch_or_idle():
    starts = []

    def body(ctx):
        starts.append(ctx.txn.txn_id)
        ctx.sleep(0.01)

    def mapper(result):
        return [Spawn("t", owner_role="worker")] if result.txn_id < 6 else []

    system = floor_system(EngineParams(threads=2, batch_size=100, trigger=False),
                          [TransactionTemplate("t", body, result_mapper=mapper)])
    engine = Engine(system)
    report = engine.run([Spawn("t", owner_role="worker") for _ in range(2)])
    # nothing is ever 100 deep, so every batch is flushed only when the engine is idle
    assert report.committed == 8 and report.batches == 4


def test_trigger_on_dispatches_when_a_worker_idles():
    def mapper(result):
        return [Spawn("t", owner_role="worker")] if result.txn_id < 6 else []

    system = floor_system(EngineParams(threads=2, batch_size=100, trigger=True),
                          [TransactionTemplate("t", lambda ctx: ctx.sleep(0.005), result_mapper=mapper)])
    report = Engine(system).run([Spawn("t", owner_role="worker") for _ in range(2)])
    assert report.committed == 8


def test_report_json_fields():
    system = floor_system(templates=[TransactionTemplate("halt", halt_body)])
    data = json.loads(Engine(system).run([Spawn("halt", owner_role="manager")]).to_json())
    for key in ("committed", "aborted", "violations", "wall_seconds", "throughput"):
        assert key in data


def test_engine_runs_once():
    system = floor_system(templates=[TransactionTemplate("halt", halt_body)])
    engine = Engine(system)
    engine.run([Spawn("halt", owner_role="manager")])
    with pytest.raises(RuntimeError):
        engine.run([])


@pytest.mark.parametrize("optimization", [False, True])
def test_lock_protocol_under_contention(optimization):
    import random
    rng = random.Random(3)
    lock_sets = [frozenset(rng.sample([DRILL, WELD, SCANNER, PAYMENT], rng.randint(0, 3))) for _ in range(300)]
    active = {}
    overlaps = []
    guard = threading.Lock()

    def body(ctx):
        with guard:
            for p in ctx.txn.nonshareable_locks:
                if active.get(p):
                    overlaps.append(p)
                active[p] = True
        time.sleep(rng.random() * 1e-3)
        with guard:
            for p in ctx.txn.nonshareable_locks:
                active[p] = False

    system = floor_system(EngineParams(optimization, threads=4, batch_size=20, trigger=True),
                          [TransactionTemplate("t", body)])
    engine = Engine(system, record_locks=True, watchdog=5.0)
    report = engine.run([Spawn("t", owners=(0,), required_plugins=ls) for ls in lock_sets])
    assert report.committed == 300 and report.violations == 0 and report.watchdog_flags == 0
    assert not overlaps
    assert all(check_event_log(ev) == [] for ev in engine.locks.events.values())


# system definition files ---------------------------------------------------------

def test_load_system_from_json(tmp_path):
    definition = {
        "plugins": [{"id": 0, "name": "press", "shareable": False}],
        "roles": [{"id": "boss", "plugin_permissions": [0], "can_halt": True, "initial_count": 1, "max_count": 1}],
        "templates": [{"id": "press", "body": "press_body", "required_plugins": [0], "result_mapper": "then_halt"},
                      {"id": "halt", "body": "halt_body"}],
        "params": {"optimization": True, "threads": 2, "batch_size": 3, "trigger": False},
    }
    path = tmp_path / "system.json"
    path.write_text(json.dumps(definition))
    registry = {"press_body": lambda ctx: ctx.use_plugin(0), "halt_body": halt_body,
                "then_halt": lambda r: [Spawn("halt", owner_role="boss")]}
    system = load_system(path, registry)
    assert system.params.batch_size == 3
    report = Engine(system).run([Spawn("press", owner_role="boss")])
    assert report.committed == 2 and report.halted


@pytest.mark.parametrize("mutate", [
    lambda d: d["templates"][0].update(body="missing"),
    lambda d: d["roles"][0].update(can_halt=False),
    lambda d: d["templates"][0].update(required_plugins=[7]),
    lambda d: d.pop("roles"),
    lambda d: d["params"].update(threads=0),
])
def test_load_system_errors(mutate):
    definition = {
        "plugins": [{"id": 0, "shareable": False}],
        "roles": [{"id": "boss", "can_halt": True, "initial_count": 1, "max_count": 1}],
        "templates": [{"id": "t", "body": "b", "required_plugins": [0]}],
        "params": {},
    }
    mutate(definition)
    with pytest.raises(DefinitionError):
        system_from_dict(definition, {"b": halt_body})
