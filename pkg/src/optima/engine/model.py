"""Value types for multi-agent systems executed as transactions."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping


class DefinitionError(ValueError):
    """A system definition is inconsistent, or a body referenced something undefined."""


class AbortTransaction(Exception):
    """Raised inside a transaction body (or by a constraint check) to abort it."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class Status(enum.Enum):
    COMMITTED = "committed"
    ABORTED = "aborted"


@dataclass(frozen=True)
class PluginDescriptor:
    plugin_id: int
    name: str
    shareable: bool
    authorized_roles: frozenset[str] = frozenset()
    # the plugin's single operation; optional for plugins that only model a resource
    operation: Callable[..., Any] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class RoleDescriptor:
    role_id: str
    supervisor_of: frozenset[str] = frozenset()
    plugin_permissions: frozenset[int] = frozenset()
    comm_permissions: frozenset[str] = frozenset()
    can_halt: bool = False
    initial_count: int = 0
    max_count: int = 0


@dataclass(frozen=True)
class Spawn:
    """Request for a new transaction, returned by result mappers and used to seed a run.

    ``owners`` names agents explicitly; otherwise a running agent of
    ``owner_role`` is picked round-robin when the transaction is created.
    ``required_plugins`` replaces the template's declared plugin set for this
    one transaction.
    """

    template_id: str
    params: Mapping[str, Any] = field(default_factory=dict)
    owners: tuple[int, ...] | None = None
    owner_role: str | None = None
    required_plugins: frozenset[int] | None = None


@dataclass(frozen=True)
class TransactionTemplate:
    template_id: str
    body: Callable[["TxnContext"], Mapping[str, Any] | None]  # noqa: F821
    required_plugins: frozenset[int] = frozenset()
    on_commit: Callable[["TxnContext", "TransactionResult"], None] | None = None  # noqa: F821
    on_abort: Callable[["TxnContext", "TransactionResult"], None] | None = None  # noqa: F821
    result_mapper: Callable[["TransactionResult"], Iterable[Spawn]] | None = None


@dataclass(frozen=True)
class Transaction:
    txn_id: int
    template_id: str
    owners: tuple[int, ...]
    params: Mapping[str, Any]
    estimated_length: float
    nonshareable_locks: tuple[int, ...]

    def __post_init__(self):
        locks = self.nonshareable_locks
        if any(a >= b for a, b in zip(locks, locks[1:])):
            raise ValueError(f"lock list {locks} is not strictly ascending")


@dataclass(frozen=True)
class TransactionResult:
    txn_id: int
    template_id: str
    status: Status
    params: Mapping[str, Any]
    observed_length: float
    owners: tuple[int, ...] = ()
    reason: str | None = None
    halt_requested: bool = False
    worker: int = -1

    @property
    def committed(self) -> bool:
        return self.status is Status.COMMITTED


@dataclass(frozen=True)
class EngineParams:
    optimization: bool = True
    threads: int = 4
    batch_size: int = 50
    trigger: bool = False

    def __post_init__(self):
        if self.threads < 1:
            raise DefinitionError(f"thread count must be >= 1, got {self.threads}")
        if self.batch_size < 1:
            raise DefinitionError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass
class SystemDefinition:
    plugins: dict[int, PluginDescriptor]
    roles: dict[str, RoleDescriptor]
    templates: dict[str, TransactionTemplate]
    params: EngineParams = field(default_factory=EngineParams)

    @classmethod
    def build(cls, plugins: Iterable[PluginDescriptor], roles: Iterable[RoleDescriptor],
              templates: Iterable[TransactionTemplate], params: EngineParams | None = None):
        out = cls({}, {}, {}, params or EngineParams())
        for kind, items, key, table in (
            ("plugin", plugins, "plugin_id", out.plugins),
            ("role", roles, "role_id", out.roles),
            ("template", templates, "template_id", out.templates),
        ):
            for item in items:
                ident = getattr(item, key)
                if ident in table:
                    raise DefinitionError(f"duplicate {kind} id {ident!r}")
                table[ident] = item
        return out

    def validate(self) -> None:
        if not any(r.can_halt for r in self.roles.values()):
            raise DefinitionError("no role is allowed to halt the system")
        for p in self.plugins.values():
            if not isinstance(p.plugin_id, int) or p.plugin_id < 0:
                raise DefinitionError(f"plugin id {p.plugin_id!r} must be a non-negative integer")
            unknown = p.authorized_roles - self.roles.keys()
            if unknown:
                raise DefinitionError(f"plugin {p.name} authorises unknown roles {sorted(unknown)}")
        for r in self.roles.values():
            if not 0 <= r.initial_count <= r.max_count:
                raise DefinitionError(f"role {r.role_id}: need 0 <= initial <= max count")
            for label, refs, known in (
                ("supervises", r.supervisor_of, self.roles.keys()),
                ("may talk to", r.comm_permissions, self.roles.keys()),
                ("may use", r.plugin_permissions, self.plugins.keys()),
            ):
                unknown = set(refs) - set(known)
                if unknown:
                    raise DefinitionError(f"role {r.role_id} {label} unknown ids {sorted(unknown)}")
        for t in self.templates.values():
            unknown = t.required_plugins - self.plugins.keys()
            if unknown:
                raise DefinitionError(f"template {t.template_id} requires unknown plugins {sorted(unknown)}")

    def nonshareable_locks(self, required: Iterable[int]) -> tuple[int, ...]:
        try:
            return tuple(sorted(p for p in set(required) if not self.plugins[p].shareable))
        except KeyError as exc:
            raise DefinitionError(f"unknown plugin id {exc.args[0]}") from None
