"""Mixed-integer model of the conflict scheduling problem.

Variables: ``ms`` (makespan), ``s_i`` (start of job i), ``x_i_j`` (job i on
machine j) and ``pre_i_k`` (job k precedes job i).  Constraint rows are named
after their family:

    c4_i      ms - s_i >= L_i
    c5_i      sum_j x_i_j = 1
    c6_i_k    s_i - s_k - M pre_i_k >= L_k - M          (i != k)
    c7_i_k_j  pre_i_k + pre_k_i - x_i_j - x_k_j >= -1   (i > k, every machine j)
    c8_i_k    pre_i_k + pre_k_i >= 1                    (i > k, conflicting)

The model is written as CPLEX-LP text; no solver is bundled.  Solutions
from an external solver are checked with :func:`validate_mip_solution`.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Sequence

from ..core import ProblemInstance, Subschedule

TOL = 1e-6
PRE_TOL = 1e-9


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[str, float], ...]
    sense: str  # ">=", "<=", "="
    rhs: float


@dataclass
class MipModel:
    objective: tuple[tuple[str, float], ...]
    constraints: list[Constraint] = field(default_factory=list)
    continuous: list[str] = field(default_factory=list)
    binaries: list[str] = field(default_factory=list)
    big_m: float = 0.0
    sense: str = "min"

    @property
    def variables(self) -> list[str]:
        return self.continuous + self.binaries

    def family(self, tag: str) -> list[Constraint]:
        return [c for c in self.constraints if c.name.split("_", 1)[0] == tag]

    def to_lp(self) -> str:
        return write_lp(self)


def _x(i: int, j: int) -> str:
    return f"x_{i}_{j}"


def _pre(i: int, k: int) -> str:
    return f"pre_{i}_{k}"


def build_mip(instance: ProblemInstance, big_m: float | None = None) -> MipModel:
    n, m, L = instance.n, instance.m, instance.lengths
    if n < 1:
        raise ValueError("MIP model needs at least one job")
    M = float(sum(L)) if big_m is None else float(big_m)
    model = MipModel(objective=(("ms", 1.0),), big_m=M)
    model.continuous = ["ms"] + [f"s_{i}" for i in range(n)]
    model.binaries = [_x(i, j) for i in range(n) for j in range(m)]
    model.binaries += [_pre(i, k) for i in range(n) for k in range(n) if i != k]
    rows = model.constraints
    for i in range(n):
        rows.append(Constraint(f"c4_{i}", (("ms", 1.0), (f"s_{i}", -1.0)), ">=", L[i]))
    for i in range(n):
        rows.append(Constraint(f"c5_{i}", tuple((_x(i, j), 1.0) for j in range(m)), "=", 1.0))
    for i in range(n):
        for k in range(n):
            if i != k:
                rows.append(Constraint(
                    f"c6_{i}_{k}",
                    ((f"s_{i}", 1.0), (f"s_{k}", -1.0), (_pre(i, k), -M)),
                    ">=", L[k] - M))
    for i in range(n):
        for k in range(i):
            for j in range(m):
                rows.append(Constraint(
                    f"c7_{i}_{k}_{j}",
                    ((_pre(i, k), 1.0), (_pre(k, i), 1.0), (_x(i, j), -1.0), (_x(k, j), -1.0)),
                    ">=", -1.0))
    for i in range(n):
        for k in range(i):
            if instance.conflicting(i, k):
                rows.append(Constraint(f"c8_{i}_{k}", ((_pre(i, k), 1.0), (_pre(k, i), 1.0)), ">=", 1.0))
    return model


def emit_mip(instance: ProblemInstance, big_m: float | None = None) -> tuple[MipModel, str]:
    model = build_mip(instance, big_m)
    return model, write_lp(model)


# LP text ---------------------------------------------------------------

def _num(v: float) -> str:
    return repr(float(v))


def _expr(coeffs) -> str:
    parts = []
    for idx, (var, c) in enumerate(coeffs):
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        term = var if mag == 1.0 else f"{_num(mag)} {var}"
        if idx == 0:
            parts.append(f"- {term}" if sign == "-" else term)
        else:
            parts.append(f"{sign} {term}")
    return " ".join(parts)


def write_lp(model: MipModel) -> str:
    lines = ["\\ conflict scheduling model, big M = " + _num(model.big_m)]
    lines.append("Minimize" if model.sense == "min" else "Maximize")
    lines.append(f" obj: {_expr(model.objective)}")
    lines.append("Subject To")
    for c in model.constraints:
        lines.append(f" {c.name}: {_expr(c.coeffs)} {c.sense} {_num(c.rhs)}")
    lines.append("Bounds")
    for v in model.continuous:
        lines.append(f" {v} >= 0")
    lines.append("Binary")
    for v in model.binaries:
        lines.append(f" {v}")
    lines.append("End")
    return "\n".join(lines) + "\n"


_TERM = re.compile(r"([+-])?\s*(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][A-Za-z0-9_]*)")


def _parse_expr(text: str) -> tuple[tuple[str, float], ...]:
    out = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        match = _TERM.match(text, pos)
        if not match:
            raise ValueError(f"cannot parse LP expression near {text[pos:]!r}")
        sign, coef, var = match.groups()
        value = float(coef) if coef else 1.0
        out.append((var, -value if sign == "-" else value))
        pos = match.end()
        while pos < len(text) and text[pos] == " ":
            pos += 1
    return tuple(out)


def parse_lp(text: str) -> MipModel:
    """Read back LP text in the subset written by :func:`write_lp`."""
    section = None
    model = MipModel(objective=())
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("\\"):
            found = re.search(r"big M = (\S+)", line)
            if found:
                model.big_m = float(found.group(1))
            continue
        head = line.lower()
        if head in ("minimize", "maximize"):
            model.sense = "min" if head == "minimize" else "max"
            section = "obj"
            continue
        if head in ("subject to", "bounds", "binary", "end"):
            section = head
            continue
        if section == "obj":
            model.objective = _parse_expr(line.split(":", 1)[1])
        elif section == "subject to":
            name, body = line.split(":", 1)
            found = re.match(r"(.*?)\s*(>=|<=|=)\s*(\S+)$", body.strip())
            if not found:
                raise ValueError(f"bad constraint line {line!r}")
            lhs, sense, rhs = found.groups()
            model.constraints.append(Constraint(name.strip(), _parse_expr(lhs), sense, float(rhs)))
        elif section == "bounds":
            model.continuous.append(line.split()[0])
        elif section == "binary":
            model.binaries.append(line)
    return model


# solution checking -----------------------------------------------------

def schedule_to_solution(sub: Subschedule, m: int) -> dict:
    n = len(sub.machine)
    if any(k < 0 for k in sub.machine):
        raise ValueError("schedule is partial")
    x = [[1.0 if sub.machine[i] == j else 0.0 for j in range(m)] for i in range(n)]
    return {"ms": sub.makespan, "s": list(sub.start), "x": x}


def load_solution(text: str) -> tuple[list[list[float]], list[float], float]:
    data = json.loads(text)
    return data["x"], data["s"], float(data["ms"])


def validate_mip_solution(instance: ProblemInstance, x: Sequence[Sequence[float]],
                          s: Sequence[float], ms: float,
                          big_m: float | None = None) -> tuple[bool, list[str]]:
    """Check an external solution against every constraint family.

    Precedence indicators are rebuilt from the starts: ``pre_i_k`` is set when
    job i starts no earlier than job k completes.  Returns ``(ok, violations)``.
    """
    n, m, L = instance.n, instance.m, instance.lengths
    if len(s) != n or len(x) != n or any(len(row) != m for row in x):
        raise ValueError(f"solution shape mismatch: expected x {n}x{m} and s of length {n}")
    bad: list[str] = []
    for i in range(n):
        if s[i] < -TOL:
            bad.append(f"c9_{i}: s_{i} = {s[i]} < 0")
        if ms - s[i] < L[i] - TOL:
            bad.append(f"c4_{i}: ms - s_{i} = {ms - s[i]} < {L[i]}")
        for j in range(m):
            if min(abs(x[i][j]), abs(x[i][j] - 1.0)) > TOL:
                bad.append(f"c10_{i}_{j}: x_{i}_{j} = {x[i][j]} is not binary")
        total = sum(x[i])
        if abs(total - 1.0) > TOL:
            bad.append(f"c5_{i}: sum_j x_{i}_j = {total} != 1")
    finish = max((s[i] + L[i] for i in range(n)), default=0.0)
    if abs(finish - ms) > TOL:
        bad.append(f"objective: ms = {ms} but latest completion is {finish}")
    M = float(sum(L)) if big_m is None else float(big_m)
    pre = [[False] * n for _ in range(n)]
    for i in range(n):
        for k in range(n):
            if i != k:
                pre[i][k] = s[i] >= s[k] + L[k] - PRE_TOL
                if not pre[i][k] and s[i] - s[k] < L[k] - M - TOL:
                    bad.append(f"c6_{i}_{k}: start gap exceeds big M = {M}")
    for i in range(n):
        for k in range(i):
            ordered = pre[i][k] or pre[k][i]
            for j in range(m):
                if x[i][j] + x[k][j] - 1.0 > TOL and not ordered:
                    bad.append(f"c7_{i}_{k}_{j}: jobs {i} and {k} overlap on machine {j}")
            if instance.conflicting(i, k) and not ordered:
                bad.append(f"c8_{i}_{k}: conflicting jobs {i} and {k} overlap")
    return not bad, bad
