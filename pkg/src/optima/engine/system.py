"""JSON system definitions.

Callables (template bodies, hooks, result mappers, plugin operations) are
named in the file and resolved against a registry supplied by the
application at load time::

    {
      "plugins":   [{"id": 0, "name": "drill", "shareable": false, "authorized_roles": [], "operation": null}],
      "roles":     [{"id": "boss", "supervisor_of": [], "plugin_permissions": [0],
                     "comm_permissions": [], "can_halt": true, "initial_count": 1, "max_count": 1}],
      "templates": [{"id": "stop", "body": "stop_body", "required_plugins": [],
                     "on_commit": null, "on_abort": null, "result_mapper": null}],
      "params":    {"optimization": true, "threads": 4, "batch_size": 50, "trigger": false}
    }
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Mapping

from .model import (DefinitionError, EngineParams, PluginDescriptor, RoleDescriptor, SystemDefinition,
                    TransactionTemplate)


def _resolve(registry: Mapping[str, Callable], name: str | None, what: str):
    if name is None:
        return None
    try:
        return registry[name]
    except KeyError:
        raise DefinitionError(f"{what} refers to unregistered callable {name!r}") from None


def system_from_dict(data: Mapping[str, Any], registry: Mapping[str, Callable]) -> SystemDefinition:
    try:
        plugins = [
            PluginDescriptor(int(p["id"]), str(p.get("name", p["id"])), bool(p["shareable"]),
                             frozenset(p.get("authorized_roles", ())),
                             _resolve(registry, p.get("operation"), f"plugin {p['id']}"))
            for p in data["plugins"]
        ]
        roles = [
            RoleDescriptor(str(r["id"]), frozenset(r.get("supervisor_of", ())),
                           frozenset(int(x) for x in r.get("plugin_permissions", ())),
                           frozenset(r.get("comm_permissions", ())), bool(r.get("can_halt", False)),
                           int(r.get("initial_count", 0)), int(r.get("max_count", r.get("initial_count", 0))))
            for r in data["roles"]
        ]
        templates = [
            TransactionTemplate(str(t["id"]), _resolve(registry, t["body"], f"template {t['id']}"),
                                frozenset(int(x) for x in t.get("required_plugins", ())),
                                _resolve(registry, t.get("on_commit"), f"template {t['id']}"),
                                _resolve(registry, t.get("on_abort"), f"template {t['id']}"),
                                _resolve(registry, t.get("result_mapper"), f"template {t['id']}"))
            for t in data["templates"]
        ]
        params = EngineParams(**data.get("params", {}))
    except KeyError as exc:
        raise DefinitionError(f"missing field {exc.args[0]!r} in system definition") from None
    except TypeError as exc:
        raise DefinitionError(f"malformed system definition: {exc}") from None
    system = SystemDefinition.build(plugins, roles, templates, params)
    system.validate()
    return system


def load_system(path: str | Path, registry: Mapping[str, Callable]) -> SystemDefinition:
    with open(path, encoding="utf-8") as fh:
        return system_from_dict(json.load(fh), registry)
