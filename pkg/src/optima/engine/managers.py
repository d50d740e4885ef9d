"""Constraint managers consulted while transaction bodies run.

Checks return booleans; the transaction context turns a ``False`` into an
abort.  Effects of agent manipulation and messaging are held back until
the transaction commits, so an aborted transaction leaves no trace in
engine-managed state.
"""
from __future__ import annotations

import itertools
import threading
from collections import defaultdict, deque
from dataclasses import dataclass

from .model import DefinitionError, SystemDefinition

VERBS = ("start", "stop", "create", "destroy")


@dataclass
class Agent:
    agent_id: int
    role_id: str
    running: bool = True


class PluginManager:
    def __init__(self, system: SystemDefinition):
        self.system = system

    def check_plugin_access(self, agent: Agent, plugin_id: int) -> bool:
        plugin = self.system.plugins.get(plugin_id)
        if plugin is None:
            raise DefinitionError(f"unknown plugin id {plugin_id}")
        role = self.system.roles[agent.role_id]
        return plugin_id in role.plugin_permissions or agent.role_id in plugin.authorized_roles


class AgentManager:
    """Registry of live agents.

    Creations reserve a slot immediately so concurrent transactions can never
    push a role past its maximum; the new agent becomes visible on commit.
    """

    def __init__(self, system: SystemDefinition):
        self.system = system
        self._lock = threading.Lock()
        self._ids = itertools.count()
        self.agents: dict[int, Agent] = {}
        self.reserved: dict[str, int] = defaultdict(int)
        self._cursor: dict[str, int] = defaultdict(int)
        self.created = 0
        self.count_violations = 0
        self.peak: dict[str, int] = defaultdict(int)
        for role in system.roles.values():
            for _ in range(role.initial_count):
                agent = Agent(next(self._ids), role.role_id)
                self.agents[agent.agent_id] = agent
        self._observe()

    def live_count(self, role_id: str) -> int:
        return sum(1 for a in self.agents.values() if a.role_id == role_id)

    def get(self, agent_id: int) -> Agent:
        try:
            return self.agents[agent_id]
        except KeyError:
            raise DefinitionError(f"unknown agent {agent_id}") from None

    def supervises(self, actor_role: str, target_role: str) -> bool:
        return target_role in self.system.roles[actor_role].supervisor_of

    def check_agent_manipulation(self, actor: Agent, verb: str, target) -> bool:
        """``target`` is an :class:`Agent` for start/stop/destroy and a role id for create."""
        if verb not in VERBS:
            raise ValueError(f"unknown verb {verb!r}")
        if verb == "create":
            role = self.system.roles.get(target)
            if role is None:
                raise DefinitionError(f"unknown role {target!r}")
            if not self.supervises(actor.role_id, target):
                return False
            with self._lock:
                return self.live_count(target) + self.reserved[target] < role.max_count
        if verb == "stop" and actor.agent_id == target.agent_id:
            return True
        return self.supervises(actor.role_id, target.role_id)

    def reserve(self, role_id: str) -> int | None:
        """Claim a creation slot; returns the future agent id or ``None`` when the role is full."""
        with self._lock:
            if self.live_count(role_id) + self.reserved[role_id] >= self.system.roles[role_id].max_count:
                return None
            self.reserved[role_id] += 1
            return next(self._ids)

    def apply(self, effects) -> None:
        """Apply a committed transaction's agent effects atomically."""
        with self._lock:
            for verb, agent_id, role_id in effects:
                if verb == "create":
                    self.reserved[role_id] -= 1
                    self.agents[agent_id] = Agent(agent_id, role_id)
                    self.created += 1
                elif verb == "destroy":
                    self.agents.pop(agent_id, None)
                elif agent_id in self.agents:
                    self.agents[agent_id].running = verb == "start"
            self._observe()

    def discard(self, effects) -> None:
        with self._lock:
            for verb, _agent_id, role_id in effects:
                if verb == "create":
                    self.reserved[role_id] -= 1

    def _observe(self) -> None:
        counts: dict[str, int] = defaultdict(int)
        for a in self.agents.values():
            counts[a.role_id] += 1
        for role_id, role in self.system.roles.items():
            c = counts[role_id]
            self.peak[role_id] = max(self.peak[role_id], c)
            if c > role.max_count:
                self.count_violations += 1

    def counts(self, running_only: bool = False) -> dict[str, int]:
        with self._lock:
            out = {r: 0 for r in self.system.roles}
            for a in self.agents.values():
                if a.running or not running_only:
                    out[a.role_id] += 1
            return out

    def pick(self, role_id: str) -> int | None:
        """Round-robin choice of a running agent with the given role."""
        with self._lock:
            ids = sorted(a.agent_id for a in self.agents.values() if a.role_id == role_id and a.running)
            if not ids:
                ids = sorted(a.agent_id for a in self.agents.values() if a.role_id == role_id)
            if not ids:
                return None
            k = self._cursor[role_id] % len(ids)
            self._cursor[role_id] += 1
            return ids[k]


class Postmaster:
    def __init__(self, system: SystemDefinition, agents: AgentManager):
        self.system = system
        self.agents = agents
        self._lock = threading.Lock()
        self.mailboxes: dict[int, deque] = defaultdict(deque)
        self.delivered = 0

    def check_communication(self, sender: Agent, receiver: Agent) -> bool:
        a, b = sender.role_id, receiver.role_id
        if a == b:
            return True
        roles = self.system.roles
        if b in roles[a].supervisor_of or a in roles[b].supervisor_of:
            return True
        return b in roles[a].comm_permissions or a in roles[b].comm_permissions

    def deliver(self, messages) -> None:
        with self._lock:
            for sender, receiver, body in messages:
                self.mailboxes[receiver].append((sender, body))
                self.delivered += 1

    def inbox(self, agent_id: int) -> list:
        with self._lock:
            box = self.mailboxes.pop(agent_id, deque())
        return list(box)
