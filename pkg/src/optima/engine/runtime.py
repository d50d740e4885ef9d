"""The execution engine: transaction factory, scheduler loop and executor workers.

The control loop runs in the thread that calls :meth:`Engine.run`.  It turns
spawn requests into transactions, batches them, and hands them to ``m``
worker threads through per-worker FIFO registers (or one shared FIFO when
optimisation is off).  Workers publish results on a queue that the control
loop drains; result mappers run in the control loop only.
"""
from __future__ import annotations

import itertools
import json
import logging
import queue
import threading
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Iterable

from ..solvers import SaParams
from .locks import LockManager
from .managers import Agent, AgentManager, PluginManager, Postmaster
from .model import (AbortTransaction, DefinitionError, Spawn, Status, SystemDefinition, Transaction,
                    TransactionResult)
from .scheduler import ENGINE_SA_PARAMS, LengthEstimator, schedule_batch

log = logging.getLogger(__name__)

SHUTDOWN = "shutdown"
_STOP = object()


class TxnContext:
    """What a transaction body may touch.

    Every plugin use, agent manipulation and message goes through this
    object so the managers can check it.  A failed check raises
    :class:`AbortTransaction`, which the executor turns into an abort.
    Agent changes and messages are buffered and only applied on commit.
    """

    def __init__(self, engine: "Engine", txn: Transaction, worker: int):
        self.engine = engine
        self.txn = txn
        self.worker = worker
        self.params = txn.params
        self.agent_effects: list[tuple[str, int, str]] = []
        self.outbox: list[tuple[int, int, Any]] = []
        self.halt_requested = False
        self.payload: dict[str, Any] = {}

    @property
    def owner(self) -> Agent:
        if not self.txn.owners:
            raise AbortTransaction("transaction has no owner agent")
        try:
            return self.engine.agents.get(self.txn.owners[0])
        except DefinitionError:
            raise AbortTransaction(f"owner agent {self.txn.owners[0]} no longer exists") from None

    def abort(self, reason: str = "aborted by body"):
        raise AbortTransaction(reason)

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)

    def use_plugin(self, plugin_id: int, *args, **kwargs):
        plugin = self.engine.system.plugins.get(plugin_id)
        if not self.engine.plugins.check_plugin_access(self.owner, plugin_id):
            raise AbortTransaction(f"agent {self.owner.agent_id} may not use plugin {plugin.name}")
        if not plugin.shareable and plugin_id not in self.txn.nonshareable_locks:
            raise AbortTransaction(f"plugin {plugin.name} is non-shareable but was not declared")
        if plugin.operation is None:
            return None
        return plugin.operation(self, *args, **kwargs)

    def _target(self, agent_id: int) -> Agent:
        try:
            return self.engine.agents.get(agent_id)
        except DefinitionError:
            raise AbortTransaction(f"agent {agent_id} does not exist") from None

    def _manipulate(self, verb: str, agent_id: int) -> None:
        target = self._target(agent_id)
        if not self.engine.agents.check_agent_manipulation(self.owner, verb, target):
            raise AbortTransaction(f"agent {self.owner.agent_id} may not {verb} agent {agent_id}")
        self.agent_effects.append((verb, agent_id, target.role_id))

    def start_agent(self, agent_id: int) -> None:
        self._manipulate("start", agent_id)

    def stop_agent(self, agent_id: int) -> None:
        self._manipulate("stop", agent_id)

    def destroy_agent(self, agent_id: int) -> None:
        self._manipulate("destroy", agent_id)

    def create_agent(self, role_id: str) -> int:
        """Reserve a new agent of ``role_id``; it exists once this transaction commits."""
        agents = self.engine.agents
        if not agents.check_agent_manipulation(self.owner, "create", role_id):
            raise AbortTransaction(f"agent {self.owner.agent_id} may not create a {role_id}")
        new_id = agents.reserve(role_id)
        if new_id is None:
            raise AbortTransaction(f"role {role_id} is at its maximum count")
        self.agent_effects.append(("create", new_id, role_id))
        return new_id

    def send(self, receiver_id: int, body: Any) -> None:
        receiver = self._target(receiver_id)
        if not self.engine.postmaster.check_communication(self.owner, receiver):
            raise AbortTransaction(f"agent {self.owner.agent_id} may not message agent {receiver_id}")
        self.outbox.append((self.owner.agent_id, receiver_id, body))

    def inbox(self) -> list:
        return self.engine.postmaster.inbox(self.owner.agent_id)

    def request_halt(self) -> None:
        role = self.engine.system.roles[self.owner.role_id]
        if not role.can_halt:
            raise AbortTransaction(f"role {role.role_id} may not halt the system")
        self.halt_requested = True


@dataclass
class EngineReport:
    committed: int = 0
    aborted: int = 0
    violations: int = 0
    wall_seconds: float = 0.0
    throughput: float = 0.0
    created_agents: int = 0
    shutdown_aborts: int = 0
    order_violations: int = 0
    exclusion_violations: int = 0
    count_violations: int = 0
    hook_errors: int = 0
    watchdog_flags: int = 0
    batches: int = 0
    halted: bool = False
    timed_out: bool = False
    abort_reasons: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


class Engine:
    """Runs a :class:`SystemDefinition` until a halt request or until no work is left.

    Parameters
    ----------
    system : SystemDefinition
        Validated before anything starts.
    estimator : LengthEstimator, optional
        Length estimator used by the scheduler; any object with ``estimate``
        and ``observe`` works.
    sa_params : SaParams
        Annealing settings for batch scheduling.  The seed is varied per batch.
    watchdog : float or None
        Seconds after which a lock wait is flagged.
    record_locks : bool
        Keep the per-transaction lock event log (memory grows with the run).
    keep_results : bool
        Keep every :class:`TransactionResult` in :attr:`results`.
    """

    def __init__(self, system: SystemDefinition, *, estimator=None, sa_params: SaParams = ENGINE_SA_PARAMS,
                 watchdog: float | None = 30.0, record_locks: bool = False, keep_results: bool = False,
                 warm_start: bool = True):
        system.validate()
        self.system = system
        self.params = system.params
        self.estimator = estimator or LengthEstimator()
        self.sa_params = sa_params
        self.warm_start = warm_start
        self.locks = LockManager([p.plugin_id for p in system.plugins.values() if not p.shareable],
                                 watchdog=watchdog, record=record_locks, strict=False)
        self.agents = AgentManager(system)
        self.plugins = PluginManager(system)
        self.postmaster = Postmaster(system, self.agents)
        self.keep_results = keep_results
        self.results: list[TransactionResult] = []
        self.report = EngineReport()
        self._ids = itertools.count()
        self._events: queue.Queue = queue.Queue()
        self._halting = threading.Event()
        self._stats_lock = threading.Lock()
        self._used = False

    # transaction factory ------------------------------------------------

    def make_transaction(self, spawn: Spawn) -> Transaction:
        template = self.system.templates.get(spawn.template_id)
        if template is None:
            raise DefinitionError(f"unknown template {spawn.template_id!r}")
        required = template.required_plugins if spawn.required_plugins is None else spawn.required_plugins
        if spawn.owners is not None:
            owners = tuple(spawn.owners)
        elif spawn.owner_role is not None:
            if spawn.owner_role not in self.system.roles:
                raise DefinitionError(f"unknown role {spawn.owner_role!r}")
            picked = self.agents.pick(spawn.owner_role)
            owners = () if picked is None else (picked,)
        else:
            owners = ()
        params = dict(spawn.params)
        estimate = self.estimator.estimate(spawn.template_id, params) if self.params.optimization else 1.0
        return Transaction(next(self._ids), spawn.template_id, owners, params, max(float(estimate), 1e-9),
                           self.system.nonshareable_locks(required))

    # executor -----------------------------------------------------------

    def _shutdown_result(self, txn: Transaction, worker: int) -> TransactionResult:
        result = TransactionResult(txn.txn_id, txn.template_id, Status.ABORTED, txn.params, 0.0, txn.owners,
                                   SHUTDOWN, False, worker)
        hook = self.system.templates[txn.template_id].on_abort
        if hook is not None:
            self._run_hook(hook, TxnContext(self, txn, worker), result)
        return result

    def _run_hook(self, hook, ctx, result) -> None:
        try:
            hook(ctx, result)
        except Exception:
            log.exception("hook of txn %s failed", result.txn_id)
            with self._stats_lock:
                self.report.hook_errors += 1

    def execute(self, txn: Transaction, worker: int = -1) -> TransactionResult:
        """Run one transaction under the locking protocol and return its result."""
        template = self.system.templates[txn.template_id]
        self.locks.acquire(txn.txn_id, txn.nonshareable_locks)
        t0 = time.perf_counter()
        self.locks.mark(txn.txn_id, "begin")
        ctx = TxnContext(self, txn, worker)
        reason = None
        try:
            payload = template.body(ctx)
            if payload:
                ctx.payload.update(payload)
        except AbortTransaction as exc:
            reason = exc.reason
        except Exception as exc:
            log.exception("body of txn %s (%s) raised", txn.txn_id, txn.template_id)
            reason = f"error: {exc!r}"
        params = {**txn.params, **ctx.payload}
        observed = time.perf_counter() - t0
        if reason is None:
            self.agents.apply(ctx.agent_effects)
            self.postmaster.deliver(ctx.outbox)
            result = TransactionResult(txn.txn_id, txn.template_id, Status.COMMITTED, params, observed,
                                       txn.owners, None, ctx.halt_requested, worker)
            if template.on_commit is not None:
                self._run_hook(template.on_commit, ctx, result)
            self.locks.mark(txn.txn_id, "commit")
        else:
            self.agents.discard(ctx.agent_effects)
            result = TransactionResult(txn.txn_id, txn.template_id, Status.ABORTED, params, observed,
                                       txn.owners, reason, False, worker)
            if template.on_abort is not None:
                self._run_hook(template.on_abort, ctx, result)
            self.locks.mark(txn.txn_id, "abort")
        self.locks.release(txn.txn_id)
        return result

    def _worker(self, worker: int, register: queue.Queue) -> None:
        while True:
            txn = register.get()
            if txn is _STOP:
                return
            if self._halting.is_set():
                result = self._shutdown_result(txn, worker)
            else:
                result = self.execute(txn, worker)
            self._events.put((worker, result))

    # control loop -------------------------------------------------------

    def run(self, initial: Iterable[Spawn], timeout: float | None = None) -> EngineReport:
        if self._used:
            raise RuntimeError("an Engine instance runs once; build a new one")
        self._used = True
        p = self.params
        shared = not p.optimization
        registers = [queue.Queue() for _ in range(1 if shared else p.threads)]
        threads = [threading.Thread(target=self._worker, args=(w, registers[0 if shared else w]),
                                    name=f"optima-worker-{w}", daemon=True) for w in range(p.threads)]
        for t in threads:
            t.start()

        pending: list[Transaction] = []
        outstanding = [0] * p.threads  # dispatched, result not yet back
        backlog = [0.0] * p.threads  # estimated work in each register
        estimates: dict[int, float] = {}
        in_flight = 0
        report = self.report
        t_start = time.perf_counter()
        deadline = None if timeout is None else t_start + timeout
        batch_no = 0

        def spawn_all(spawns):
            for s in spawns or ():
                pending.append(self.make_transaction(s))

        def dispatch(batch):
            nonlocal in_flight, batch_no
            sa = replace(self.sa_params, rng_seed=self.sa_params.rng_seed + batch_no)
            sched = None if shared else schedule_batch(batch, p, sa, warm_start=self.warm_start)
            batch_no += 1
            report.batches += 1
            in_flight += len(batch)
            if shared:
                for txn in batch:
                    registers[0].put(txn)
                return
            # heaviest queue goes to the worker with the least queued work
            queue_order = sorted(range(p.threads), key=lambda k: -sum(t.estimated_length for t in sched.queues[k]))
            worker_order = sorted(range(p.threads), key=lambda w: (backlog[w], w))
            for k, w in zip(queue_order, worker_order):
                for txn in sched.queues[k]:
                    outstanding[w] += 1
                    backlog[w] += txn.estimated_length
                    estimates[txn.txn_id] = txn.estimated_length
                    registers[w].put(txn)

        def begin_halt():
            if self._halting.is_set():
                return
            self._halting.set()
            for txn in pending:
                self._record(self._shutdown_result(txn, -1))
            pending.clear()

        spawn_all(initial)
        while True:
            # collect results
            block = in_flight > 0 and not (pending and self._dispatch_ready(pending, outstanding, in_flight))
            try:
                first = self._events.get(timeout=0.05) if block else self._events.get_nowait()
            except queue.Empty:
                first = None
            batch_results = []
            if first is not None:
                batch_results.append(first)
                while True:
                    try:
                        batch_results.append(self._events.get_nowait())
                    except queue.Empty:
                        break
            for worker, result in batch_results:
                in_flight -= 1
                if not shared:
                    outstanding[worker] -= 1
                    backlog[worker] -= estimates.pop(result.txn_id, 0.0)
                self._record(result)
                if result.reason != SHUTDOWN:
                    self.estimator.observe(result.template_id, result.observed_length, result.params)
                if self._halting.is_set():
                    continue
                if result.committed and result.halt_requested:
                    report.halted = True
                    begin_halt()
                    continue
                mapper = self.system.templates[result.template_id].result_mapper
                if mapper is not None:
                    spawn_all(mapper(result))
            if deadline is not None and time.perf_counter() > deadline and not self._halting.is_set():
                report.timed_out = True
                begin_halt()
            if not self._halting.is_set():
                while pending and self._dispatch_ready(pending, outstanding, in_flight):
                    batch = pending[:p.batch_size]
                    del pending[:p.batch_size]
                    dispatch(batch)
            if in_flight == 0 and not pending:
                break

        for r in registers:
            for _ in range(p.threads if shared else 1):
                r.put(_STOP)
        for t in threads:
            t.join()
        wall = time.perf_counter() - t_start
        report.wall_seconds = wall
        report.throughput = report.committed / wall if wall > 0 else 0.0
        report.created_agents = self.agents.created
        report.order_violations = self.locks.order_violations
        report.exclusion_violations = self.locks.exclusion_violations
        report.count_violations = self.agents.count_violations
        report.watchdog_flags = self.locks.watchdog_flags
        report.violations = (report.order_violations + report.exclusion_violations + report.count_violations
                             + report.hook_errors)
        return report

    def _dispatch_ready(self, pending, outstanding, in_flight) -> bool:
        p = self.params
        if not p.optimization:
            return True
        if len(pending) >= p.batch_size or in_flight == 0:
            return True
        return p.trigger and any(c == 0 for c in outstanding)

    def _record(self, result: TransactionResult) -> None:
        report = self.report
        if result.committed:
            report.committed += 1
        else:
            report.aborted += 1
            key = result.reason or "unknown"
            if key.startswith("error:"):
                key = "error"
            report.abort_reasons[key] = report.abort_reasons.get(key, 0) + 1
            if result.reason == SHUTDOWN:
                report.shutdown_aborts += 1
        if self.keep_results:
            self.results.append(result)


def run_engine(system: SystemDefinition, initial: Iterable[Spawn], **kwargs) -> EngineReport:
    timeout = kwargs.pop("timeout", None)
    return Engine(system, **kwargs).run(initial, timeout=timeout)
