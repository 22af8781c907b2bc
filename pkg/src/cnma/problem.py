"""Problem definition shared by every optimizer in the package.

A problem is ``optimize phi(x, y)  s.t.  F(x) = y  and  P(x, y)`` where ``F``
is a blackbox, ``phi`` a linear objective and ``P`` a conjunction of linear
constraints over the declared input (x) and output (y) variables.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

CONTINUOUS = "continuous"
INTEGER = "integer"
BINARY = "binary"
VARIABLE_KINDS = (CONTINUOUS, INTEGER, BINARY)

MAXIMIZE = "maximize"
MINIMIZE = "minimize"

DEFAULT_FEASIBILITY_TOLERANCE = 1e-6


class MissingVariableError(KeyError):
    """An expression references a variable absent from the assignment."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"no value for variable {self.name!r}"


class InvalidProblemError(ValueError):
    def __init__(self, defects: Sequence[str]):
        super().__init__("invalid problem: " + "; ".join(defects))
        self.defects = list(defects)


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: str = CONTINUOUS
    lower: float = -math.inf
    upper: float = math.inf

    @classmethod
    def binary(cls, name: str) -> VariableSpec:
        return cls(name, BINARY, 0.0, 1.0)

    @property
    def is_discrete(self) -> bool:
        return self.kind in (INTEGER, BINARY)

    def defects(self) -> list[str]:
        out = []
        if self.kind not in VARIABLE_KINDS:
            out.append(f"variable {self.name}: unknown kind {self.kind!r}")
        if math.isnan(self.lower) or math.isnan(self.upper):
            out.append(f"variable {self.name}: NaN bound")
        elif self.lower > self.upper:
            out.append(f"variable {self.name}: inverted bounds [{self.lower}, {self.upper}]")
        if self.is_discrete:
            for b in (self.lower, self.upper):
                if math.isfinite(b) and b != math.floor(b):
                    out.append(f"variable {self.name}: non-integral bound {b} for {self.kind} variable")
        if self.kind == BINARY and (self.lower, self.upper) != (0, 1):
            out.append(f"variable {self.name}: binary variable must have bounds [0, 1]")
        return out


class LinearExpr:
    """Immutable ``constant + sum(coef * var)`` over named variables.

    Supports ``+``, ``-``, scalar ``*`` and ``/``, and comparison with ``<=``
    and ``>=`` to build :class:`Constraint` objects::

        y = LinearExpr.var("y")
        c = (2 * y - 1) >= 35
    """

    __slots__ = ("_constant", "_terms")

    def __init__(self, terms: Mapping[str, float] | Iterable[tuple[float, str]] | None = None,
                 constant: float = 0.0):
        merged: dict[str, float] = {}
        if terms is not None:
            items = terms.items() if isinstance(terms, Mapping) else ((v, c) for c, v in terms)
            for name, coef in items:
                merged[name] = merged.get(name, 0.0) + float(coef)
        object.__setattr__(self, "_terms", {k: v for k, v in merged.items() if v != 0.0})
        object.__setattr__(self, "_constant", float(constant))

    def __setattr__(self, key, value):
        raise AttributeError("LinearExpr is immutable")

    @classmethod
    def var(cls, name: str, coef: float = 1.0) -> LinearExpr:
        return cls({name: coef})

    @classmethod
    def const(cls, value: float) -> LinearExpr:
        return cls(None, value)

    @classmethod
    def coerce(cls, value: LinearExpr | float | str) -> LinearExpr:
        if isinstance(value, LinearExpr):
            return value
        if isinstance(value, str):
            return cls.var(value)
        return cls.const(float(value))

    @property
    def terms(self) -> dict[str, float]:
        return dict(self._terms)

    @property
    def constant(self) -> float:
        return self._constant

    def variables(self) -> set[str]:
        return set(self._terms)

    def __add__(self, other):
        other = LinearExpr.coerce(other)
        terms = dict(self._terms)
        for k, v in other._terms.items():
            terms[k] = terms.get(k, 0.0) + v
        return LinearExpr(terms, self._constant + other._constant)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-LinearExpr.coerce(other))

    def __rsub__(self, other):
        return LinearExpr.coerce(other) - self

    def __mul__(self, scalar):
        if isinstance(scalar, LinearExpr):
            raise TypeError("product of two linear expressions is not linear")
        s = float(scalar)
        return LinearExpr({k: v * s for k, v in self._terms.items()}, self._constant * s)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __le__(self, other):
        return Constraint(self, "<=", other)

    def __ge__(self, other):
        return Constraint(self, ">=", other)

    def equals(self, other) -> Constraint:
        return Constraint(self, "==", other)

    def __eq__(self, other):
        if not isinstance(other, LinearExpr):
            return NotImplemented
        return self._terms == other._terms and self._constant == other._constant

    def __hash__(self):
        return hash((frozenset(self._terms.items()), self._constant))

    def __repr__(self):
        parts = [f"{v:+g}*{k}" for k, v in self._terms.items()]
        if self._constant or not parts:
            parts.append(f"{self._constant:+g}")
        return "LinearExpr(" + " ".join(parts) + ")"

    def __reduce__(self):
        return (LinearExpr, (self._terms, self._constant))


def eval_linear(expr: LinearExpr, assignment: Mapping[str, float]) -> float:
    total = expr.constant
    for name, coef in expr._terms.items():
        try:
            total += coef * float(assignment[name])
        except KeyError:
            raise MissingVariableError(name) from None
    return total


_SENSES = ("<=", ">=", "==", "abs<=")


@dataclass(frozen=True, eq=False)
class Constraint:
    """``lhs <sense> rhs``; ``abs<=`` means ``|lhs| <= rhs``."""

    lhs: LinearExpr
    sense: str
    rhs: LinearExpr = field(default_factory=LinearExpr)
    name: str = ""

    def __post_init__(self):
        if self.sense not in _SENSES:
            raise ValueError(f"unknown constraint sense {self.sense!r}")
        object.__setattr__(self, "lhs", LinearExpr.coerce(self.lhs))
        object.__setattr__(self, "rhs", LinearExpr.coerce(self.rhs))

    def variables(self) -> set[str]:
        return self.lhs.variables() | self.rhs.variables()

    def slack(self, assignment: Mapping[str, float]) -> float:
        """Signed slack: non-negative when satisfied exactly."""
        a = eval_linear(self.lhs, assignment)
        b = eval_linear(self.rhs, assignment)
        if self.sense == "<=":
            return b - a
        if self.sense == ">=":
            return a - b
        if self.sense == "==":
            return -abs(a - b)
        return b - abs(a)

    def is_satisfied(self, assignment: Mapping[str, float], tol: float = DEFAULT_FEASIBILITY_TOLERANCE) -> bool:
        return self.slack(assignment) >= -tol

    def linearized(self) -> list[Constraint]:
        """Canonical rows ``expr <sense> constant`` with all variables on the left.

        The absolute-value form becomes ``lhs - rhs <= 0`` and ``-lhs - rhs <= 0``.
        """
        if self.sense == "abs<=":
            pos = self.lhs - self.rhs
            neg = -self.lhs - self.rhs
            return [_canonical(pos, "<=", f"{self.name}+" if self.name else ""),
                    _canonical(neg, "<=", f"{self.name}-" if self.name else "")]
        return [_canonical(self.lhs - self.rhs, self.sense, self.name)]

    def __repr__(self):
        return f"Constraint({self.lhs!r} {self.sense} {self.rhs!r})"


def _canonical(diff: LinearExpr, sense: str, name: str) -> Constraint:
    return Constraint(LinearExpr(diff.terms), sense, LinearExpr.const(-diff.constant), name)


def le(lhs, rhs, name: str = "") -> Constraint:
    return Constraint(LinearExpr.coerce(lhs), "<=", LinearExpr.coerce(rhs), name)


def ge(lhs, rhs, name: str = "") -> Constraint:
    return Constraint(LinearExpr.coerce(lhs), ">=", LinearExpr.coerce(rhs), name)


def eq(lhs, rhs, name: str = "") -> Constraint:
    return Constraint(LinearExpr.coerce(lhs), "==", LinearExpr.coerce(rhs), name)


def abs_le(expr, bound, name: str = "") -> Constraint:
    return Constraint(LinearExpr.coerce(expr), "abs<=", LinearExpr.coerce(bound), name)


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one blackbox call. ``y`` is ``None`` iff the call failed."""

    y: tuple[float, ...] | None
    duration: float = 0.0
    error: str = ""

    @classmethod
    def success(cls, y: Sequence[float], duration: float = 0.0) -> EvalResult:
        return cls(tuple(float(v) for v in y), duration)

    @classmethod
    def failure(cls, error: str = "", duration: float = 0.0) -> EvalResult:
        return cls(None, duration, error)

    @property
    def ok(self) -> bool:
        return self.y is not None

    @property
    def status(self) -> str:
        return "ok" if self.ok else "failed"


@dataclass(frozen=True)
class Sample:
    x: tuple[float, ...]
    result: EvalResult

    @property
    def ok(self) -> bool:
        return self.result.ok

    @property
    def y(self) -> tuple[float, ...] | None:
        return self.result.y


@dataclass(frozen=True)
class Blackbox:
    """A callable with declared arities. ``func`` maps an x array to y values.

    ``func`` may also return an :class:`EvalResult` directly, or raise to signal
    failure.
    """

    func: Callable[[np.ndarray], Any]
    n_inputs: int | None = None
    n_outputs: int | None = None
    name: str = ""

    def __call__(self, x):
        return self.func(x)


@dataclass(frozen=True)
class ConstraintCheck:
    satisfied: bool
    violations: tuple[tuple[Constraint, float], ...] = ()

    def __bool__(self):
        return self.satisfied


@dataclass(frozen=True)
class Problem:
    x_vars: tuple[VariableSpec, ...]
    y_vars: tuple[VariableSpec, ...]
    objective: LinearExpr
    blackbox: Callable[[np.ndarray], Any]
    sense: str = MAXIMIZE
    constraints: tuple[Constraint, ...] = ()
    feasibility_tolerance: float = DEFAULT_FEASIBILITY_TOLERANCE
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "x_vars", tuple(self.x_vars))
        object.__setattr__(self, "y_vars", tuple(self.y_vars))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "objective", LinearExpr.coerce(self.objective))

    @property
    def x_names(self) -> list[str]:
        return [v.name for v in self.x_vars]

    @property
    def y_names(self) -> list[str]:
        return [v.name for v in self.y_vars]

    @property
    def maximize(self) -> bool:
        return self.sense == MAXIMIZE

    def assignment(self, x: Sequence[float], y: Sequence[float]) -> dict[str, float]:
        out = dict(zip(self.x_names, map(float, x)))
        out.update(zip(self.y_names, map(float, y)))
        return out

    def objective_value(self, x: Sequence[float], y: Sequence[float]) -> float:
        return eval_linear(self.objective, self.assignment(x, y))

    def is_better(self, a: float, b: float | None) -> bool:
        """True when objective value ``a`` strictly improves on ``b``."""
        if b is None:
            return True
        return a > b if self.maximize else a < b

    def with_constraints(self, *extra: Constraint) -> Problem:
        return replace(self, constraints=self.constraints + tuple(extra))


def check_constraints(problem: Problem, assignment: Mapping[str, float],
                      tol: float | None = None) -> ConstraintCheck:
    """Evaluate the conjunction P at ``assignment``.

    Declared variable bounds of y-variables are treated as constraints too,
    since the MILP enforces them.
    """
    tol = problem.feasibility_tolerance if tol is None else tol
    violations = []
    for c in problem.constraints:
        s = c.slack(assignment)
        if s < -tol:
            violations.append((c, s))
    for v in problem.y_vars:
        val = assignment.get(v.name)
        if val is None:
            raise MissingVariableError(v.name)
        if val < v.lower - tol:
            violations.append((ge(v.name, v.lower, f"{v.name}.lower"), val - v.lower))
        elif val > v.upper + tol:
            violations.append((le(v.name, v.upper, f"{v.name}.upper"), v.upper - val))
    return ConstraintCheck(not violations, tuple(violations))


def validate_problem(problem: Problem) -> list[str]:
    """Return a list of defects; empty means the problem is well formed."""
    defects: list[str] = []
    names: set[str] = set()
    for v in (*problem.x_vars, *problem.y_vars):
        if v.name in names:
            defects.append(f"duplicate variable {v.name}")
        names.add(v.name)
        defects.extend(v.defects())
    if not problem.x_vars:
        defects.append("no x variables declared")
    if not problem.y_vars:
        defects.append("no y variables declared")
    for v in problem.x_vars:
        if not (math.isfinite(v.lower) and math.isfinite(v.upper)):
            defects.append(f"variable {v.name}: x variables need finite bounds")
    for v in problem.y_vars:
        if v.kind != CONTINUOUS:
            defects.append(f"variable {v.name}: y variables must be continuous")

    def unknown(where: str, used: set[str]):
        for name in sorted(used - names):
            defects.append(f"unknown variable {name} in {where}")

    unknown("objective", problem.objective.variables())
    for i, c in enumerate(problem.constraints):
        unknown(f"constraint {c.name or i}", c.variables())
    if problem.sense not in (MAXIMIZE, MINIMIZE):
        defects.append(f"unknown sense {problem.sense!r}")
    if not problem.feasibility_tolerance >= 0:
        defects.append("feasibility_tolerance must be non-negative")

    n_in = getattr(problem.blackbox, "n_inputs", None)
    n_out = getattr(problem.blackbox, "n_outputs", None)
    if n_in is not None and n_in != len(problem.x_vars):
        defects.append(f"arity mismatch: blackbox takes {n_in} inputs, {len(problem.x_vars)} x variables declared")
    if n_out is not None and n_out != len(problem.y_vars):
        defects.append(f"arity mismatch: blackbox returns {n_out} outputs, {len(problem.y_vars)} y variables declared")
    if not callable(problem.blackbox):
        defects.append("blackbox is not callable")
    return defects


def round_discrete(problem: Problem, x: Sequence[float]) -> tuple[float, ...]:
    """Snap integer components to the nearest integer and clip into bounds."""
    out = []
    for spec, value in zip(problem.x_vars, x):
        value = float(value)
        if spec.is_discrete:
            value = float(round(value))
        out.append(min(max(value, spec.lower), spec.upper))
    return tuple(out)
