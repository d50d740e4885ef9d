"""Exclusive locks on non-shareable plugins, always taken in ascending plugin-id order.

A transaction takes every lock it needs before its body runs and gives them
all back only after it has committed or aborted.  Taking locks in one global
order rules out circular waits.
"""
from __future__ import annotations

import logging
import threading
import time
from collections import defaultdict

log = logging.getLogger(__name__)


class LockOrderError(AssertionError):
    pass


class LockManager:
    """Per-plugin mutexes plus the probes used to audit the locking protocol.

    Parameters
    ----------
    plugin_ids : iterable of int
        Ids of the non-shareable plugins.
    watchdog : float or None
        Seconds a single lock wait may take before it is flagged as a
        liveness problem.  The wait continues after flagging.
    record : bool
        Keep a per-transaction event log (``acquire``/``release`` plus the
        markers passed to :meth:`mark`).
    strict : bool
        Raise :class:`LockOrderError` on protocol misuse instead of only
        counting it.
    """

    def __init__(self, plugin_ids, watchdog: float | None = 30.0, record: bool = True, strict: bool = True):
        self._locks = {pid: threading.Lock() for pid in plugin_ids}
        self._holders: dict[int, int] = {}
        self._held_by_txn: dict[int, tuple[int, ...]] = {}
        self._probe = threading.Lock()
        self.watchdog = watchdog
        self.record = record
        self.strict = strict
        self.events: dict[int, list[tuple]] = defaultdict(list)
        self.intervals: dict[int, list[tuple[int, float, float]]] = defaultdict(list)
        self._acquired_at: dict[tuple[int, int], float] = {}
        self.order_violations = 0
        self.exclusion_violations = 0
        self.watchdog_flags = 0

    @property
    def plugin_ids(self):
        return tuple(sorted(self._locks))

    def _violation(self, kind: str, message: str):
        with self._probe:
            if kind == "order":
                self.order_violations += 1
            else:
                self.exclusion_violations += 1
        log.error(message)
        if self.strict:
            raise LockOrderError(message)

    def acquire(self, txn_id: int, lock_ids) -> None:
        lock_ids = tuple(lock_ids)
        if txn_id in self._held_by_txn:
            self._violation("order", f"txn {txn_id} acquires while already holding locks")
        previous = -1
        for pid in lock_ids:
            if pid <= previous:
                self._violation("order", f"txn {txn_id} requested {pid} after {previous}")
            previous = pid
            lock = self._locks[pid]
            if self.watchdog is None:
                lock.acquire()
            elif not lock.acquire(timeout=self.watchdog):
                with self._probe:
                    self.watchdog_flags += 1
                log.warning("txn %s waited more than %.1fs for plugin %s", txn_id, self.watchdog, pid)
                lock.acquire()
            now = time.perf_counter()
            with self._probe:
                holder = self._holders.get(pid)
                self._holders[pid] = txn_id
                self._acquired_at[(pid, txn_id)] = now
                if self.record:
                    self.events[txn_id].append(("acquire", pid))
            if holder is not None:
                self._violation("exclusion", f"plugin {pid} held by {holder} and {txn_id}")
        with self._probe:
            self._held_by_txn[txn_id] = lock_ids

    def release(self, txn_id: int) -> None:
        with self._probe:
            lock_ids = self._held_by_txn.pop(txn_id, ())
        now = time.perf_counter()
        for pid in reversed(lock_ids):
            with self._probe:
                if self._holders.get(pid) == txn_id:
                    del self._holders[pid]
                start = self._acquired_at.pop((pid, txn_id))
                self.intervals[pid].append((txn_id, start, now))
                if self.record:
                    self.events[txn_id].append(("release", pid))
            self._locks[pid].release()

    def mark(self, txn_id: int, tag: str) -> None:
        if self.record:
            with self._probe:
                self.events[txn_id].append((tag,))

    def holders(self) -> dict[int, int]:
        with self._probe:
            return dict(self._holders)


def check_event_log(events) -> list[str]:
    """Problems with one transaction's lock log, which must look like
    ``acquire* begin (commit|abort) release*`` with ascending acquires and a
    release for every acquire.  ``begin`` may be absent for transactions that
    never ran.
    """
    problems = []
    acquired: list[int] = []
    released: list[int] = []
    phase = "acquire"
    for event in events:
        kind = event[0]
        if kind == "acquire":
            if phase != "acquire":
                problems.append(f"acquire of {event[1]} after {phase} phase")
            if acquired and event[1] <= acquired[-1]:
                problems.append(f"acquire of {event[1]} not ascending after {acquired[-1]}")
            acquired.append(event[1])
        elif kind == "begin":
            if phase != "acquire":
                problems.append("body started twice or after release")
            phase = "body"
        elif kind in ("commit", "abort"):
            if phase not in ("body", "acquire"):
                problems.append(f"{kind} outside the body phase")
            phase = "finished"
        elif kind == "release":
            if phase != "finished" and phase != "release":
                problems.append(f"release of {event[1]} before commit/abort")
            phase = "release"
            released.append(event[1])
    if sorted(acquired) != sorted(released):
        problems.append(f"acquired {acquired} but released {released}")
    return problems


def overlapping_intervals(intervals) -> list[tuple]:
    """Pairs of (txn, start, end) intervals on one plugin that overlap in time."""
    ordered = sorted(intervals, key=lambda iv: (iv[1], iv[2]))
    clashes = []
    latest = None
    for iv in ordered:
        if latest is not None and iv[1] < latest[2]:
            clashes.append((latest, iv))
        if latest is None or iv[2] > latest[2]:
            latest = iv
    return clashes
