from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from ..problem import (
    BINARY,
    CONTINUOUS,
    INTEGER,
    MAXIMIZE,
    MINIMIZE,
    Constraint,
    LinearExpr,
)


@dataclass(frozen=True)
class MilpVar:
    name: str
    kind: str = CONTINUOUS
    lower: float = 0.0
    upper: float = math.inf

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, INTEGER, BINARY):
            raise ValueError(f"unknown variable kind {self.kind!r}")
        if not self.lower <= self.upper:
            raise ValueError(f"variable {self.name}: lower {self.lower} > upper {self.upper}")
        if self.kind == BINARY and not (0 <= self.lower and self.upper <= 1):
            raise ValueError(f"binary variable {self.name} must lie within [0, 1]")

    @property
    def is_integer(self) -> bool:
        return self.kind != CONTINUOUS


@dataclass(frozen=True)
class MilpArrays:
    """Dense form: rows ``A[i] @ x  (<=|>=|==)  b[i]``."""

    names: list[str]
    c: np.ndarray
    c0: float
    A: np.ndarray
    senses: list[str]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    integer: np.ndarray
    maximize: bool


@dataclass
class Milp:
    """Variables, linear rows, and a linear objective.

    ``handles`` maps problem variable names to the MILP variables that carry
    them (identity for encodings built by :func:`cnma.encoding.nn_to_milp`).
    """

    vars: list[MilpVar] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: LinearExpr = field(default_factory=LinearExpr)
    sense: str = MAXIMIZE
    handles: dict[str, str] = field(default_factory=dict)
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {}
        for i, v in enumerate(self.vars):
            if v.name in self._index:
                raise ValueError(f"duplicate variable {v.name}")
            self._index[v.name] = i

    def add_var(self, name: str, kind: str = CONTINUOUS, lower: float = 0.0,
                upper: float = math.inf) -> LinearExpr:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        self._index[name] = len(self.vars)
        self.vars.append(MilpVar(name, kind, lower, upper))
        return LinearExpr.var(name)

    def add_constraint(self, constraint: Constraint) -> None:
        for c in constraint.linearized():
            unknown = c.variables() - self._index.keys()
            if unknown:
                raise ValueError(f"constraint references undeclared variables {sorted(unknown)}")
            self.constraints.append(c)

    def var(self, name: str) -> MilpVar:
        return self.vars[self._index[name]]

    def has_var(self, name: str) -> bool:
        return name in self._index

    @property
    def names(self) -> list[str]:
        return [v.name for v in self.vars]

    def n_binary(self) -> int:
        return sum(v.kind == BINARY for v in self.vars)

    def to_arrays(self) -> MilpArrays:
        n = len(self.vars)
        idx = self._index
        c = np.zeros(n)
        for name, coef in self.objective.terms.items():
            c[idx[name]] += coef
        m = len(self.constraints)
        A = np.zeros((m, n))
        b = np.zeros(m)
        senses = []
        for i, con in enumerate(self.constraints):
            if con.sense == "abs<=":
                raise ValueError("absolute-value rows must be linearized first")
            diff = con.lhs - con.rhs
            for name, coef in diff.terms.items():
                A[i, idx[name]] += coef
            b[i] = -diff.constant
            senses.append(con.sense)
        return MilpArrays(
            names=self.names, c=c, c0=self.objective.constant, A=A, senses=senses, b=b,
            lower=np.array([v.lower for v in self.vars], dtype=float),
            upper=np.array([v.upper for v in self.vars], dtype=float),
            integer=np.array([v.is_integer for v in self.vars], dtype=bool),
            maximize=self.sense == MAXIMIZE,
        )

    def relaxed(self) -> Milp:
        """Copy with every integrality requirement dropped."""
        return Milp([MilpVar(v.name, CONTINUOUS, v.lower, v.upper) for v in self.vars],
                    list(self.constraints), self.objective, self.sense, dict(self.handles), self.info)

    def with_fixed(self, values: Mapping[str, float]) -> Milp:
        """Copy with the named variables fixed through their bounds."""
        vars_ = [MilpVar(v.name, v.kind, float(values[v.name]), float(values[v.name]))
                 if v.name in values else v for v in self.vars]
        return Milp(vars_, list(self.constraints), self.objective, self.sense, dict(self.handles), self.info)

    def objective_value(self, assignment: Mapping[str, float]) -> float:
        from ..problem import eval_linear
        return eval_linear(self.objective, assignment)

    def max_violation(self, assignment: Mapping[str, float]) -> float:
        """Largest constraint or bound violation of ``assignment`` (0 if feasible)."""
        worst = 0.0
        for con in self.constraints:
            worst = max(worst, -con.slack(assignment))
        for v in self.vars:
            val = assignment[v.name]
            worst = max(worst, v.lower - val, val - v.upper)
        return worst


def sense_sign(sense: str) -> float:
    if sense not in (MAXIMIZE, MINIMIZE):
        raise ValueError(f"unknown sense {sense!r}")
    return 1.0 if sense == MAXIMIZE else -1.0


def random_milp(rng: np.random.Generator, n_binary: int, n_continuous: int, n_constraints: int,
                sense: str = MAXIMIZE, names: Sequence[str] | None = None) -> Milp:
    """A bounded random MILP (used by tests and benchmarks of the solver)."""
    milp = Milp(sense=sense)
    names = list(names) if names else [f"b{i}" for i in range(n_binary)] + [f"c{i}" for i in range(n_continuous)]
    for i in range(n_binary):
        milp.add_var(names[i], BINARY, 0.0, 1.0)
    for i in range(n_continuous):
        lo = float(rng.uniform(-3, 0))
        milp.add_var(names[n_binary + i], CONTINUOUS, lo, lo + float(rng.uniform(0.5, 5)))
    all_names = milp.names
    milp.objective = LinearExpr({n: float(rng.normal()) for n in all_names}, float(rng.normal()))
    for _ in range(n_constraints):
        coefs = {n: float(rng.normal()) for n in all_names if rng.random() < 0.8}
        if not coefs:
            coefs = {all_names[0]: 1.0}
        expr = LinearExpr(coefs)
        sense_c = ["<=", ">=", "<="][int(rng.integers(3))]
        mid = sum(abs(v) for v in coefs.values()) * 0.3
        rhs = float(rng.uniform(-mid, mid))
        milp.add_constraint(Constraint(expr, sense_c, LinearExpr.const(rhs)))
    return milp
