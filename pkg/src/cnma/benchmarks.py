"""Benchmark blackboxes, their problem definitions, and a random-search baseline."""

from __future__ import annotations

import functools
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .engine import (
    BUDGET_EXHAUSTED,
    RANDOM_SAMPLE,
    EngineConfig,
    RunResult,
    _Recorder,
    _require_valid,
)
from .problem import (
    CONTINUOUS,
    MAXIMIZE,
    MINIMIZE,
    Blackbox,
    Constraint,
    EvalResult,
    LinearExpr,
    Problem,
    VariableSpec,
    round_discrete,
)
from .sampling import SampleGenerator

RASTRIGIN_BOUND = 5.12
RASTRIGIN_MAX_1D = 40.35329019
POLAK3_BEST_KNOWN = 5.933
TOY_SOURCE_OPTIMUM = 0.599788
PLACEMENT_SENSORS = 40
PLACEMENT_MODES = 40
PLACEMENT_BUDGET = 12
PLACEMENT_SEED = 20240611


class OutOfDomainError(ValueError):
    pass


class ExternalSimulatorRequired(RuntimeError):
    pass


def _check_box(x: np.ndarray, lo: float, hi: float, what: str) -> None:
    tol = 1e-9 * max(1.0, abs(lo), abs(hi))
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        raise OutOfDomainError(f"{what}: every component must lie in [{lo}, {hi}]")


# --------------------------------------------------------------------------- functions

def rastrigin(x, n: int | None = None) -> float:
    """``sum(10 + x_i^2 - 10 cos(2 pi x_i))`` on ``[-5.12, 5.12]^n``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if n is not None and x.shape[0] != n:
        raise ValueError(f"expected {n} components, got {x.shape[0]}")
    _check_box(x, -RASTRIGIN_BOUND, RASTRIGIN_BOUND, "rastrigin")
    return float(np.sum(10.0 + x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def polak3_components(x) -> np.ndarray:
    """The ten functions ``f_i(x) = sum_j exp((x_j - sin(i + 2j))^2) / j``, i = 0..9."""
    x = np.asarray(x, dtype=float)
    if x.shape != (11,):
        raise ValueError(f"polak3 takes 11 components, got {x.shape}")
    _check_box(x, -1.0, 1.0, "polak3")
    j = np.arange(1, 12, dtype=float)
    i = np.arange(10, dtype=float)[:, None]
    return np.sum(np.exp((x - np.sin(i + 2.0 * j)) ** 2) / j, axis=1)


def polak3(x) -> float:
    return float(np.max(polak3_components(x)))


def toy_constrained(x1: float, x2: float, variant: str = "printed") -> tuple[float, float]:
    """Two constraint values of the toy problem: minimize x1 + x2 s.t. v1, v2 >= 0.

    ``variant="printed"`` uses ``+1.5`` in the first function; ``"source"``
    uses ``-1.5``, the form whose optimum on ``[0, 1]^2`` is about 0.5998.
    """
    if variant not in ("printed", "source"):
        raise ValueError(f"unknown variant {variant!r}")
    shift = 1.5 if variant == "printed" else -1.5
    v1 = 0.5 * math.sin(2.0 * math.pi * (x1 * x1 - 2.0 * x2)) + x1 + 2.0 * x2 + shift
    v2 = -(x1 * x1) - x2 * x2 + 1.5
    return v1, v2


DEFAULT_DEAD_BAND = (0.4, 0.6)


def failing_blackbox(x, dead_band: tuple[float, float] = DEFAULT_DEAD_BAND) -> EvalResult:
    """Fails when the first coordinate is inside ``dead_band``; else ``sum(sin(3 pi x_i) x_i)``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _check_box(x, 0.0, 1.0, "failing_blackbox")
    if dead_band[0] <= x[0] <= dead_band[1]:
        return EvalResult.failure("undefined region")
    return EvalResult.success([float(np.sum(np.sin(3.0 * np.pi * x) * x))])


@functools.cache
def placement_coverage(seed: int = PLACEMENT_SEED) -> np.ndarray:
    """Fixed boolean matrix: ``coverage[s, f]`` is True when sensor s detects mode f.

    Sensors differ in sensitivity (detection rates between 1% and 15%), so
    some are far more informative than others.
    """
    rng = np.random.default_rng(seed)
    rates = rng.uniform(0.01, 0.15, PLACEMENT_SENSORS)
    cov = rng.random((PLACEMENT_SENSORS, PLACEMENT_MODES)) < rates[:, None]
    cov.setflags(write=False)
    return cov


def synthetic_placement(x, seed: int = PLACEMENT_SEED) -> float:
    """Fraction of failure-mode pairs that no selected sensor tells apart.

    A sensor separates modes f and g when it detects exactly one of them.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (PLACEMENT_SENSORS,):
        raise ValueError(f"synthetic_placement takes {PLACEMENT_SENSORS} components")
    if np.any((x != 0.0) & (x != 1.0)):
        raise OutOfDomainError("synthetic_placement: components must be 0 or 1")
    cov = placement_coverage(seed)[x.astype(bool)]
    # modes with identical detection signatures over the chosen sensors are indistinguishable
    if cov.shape[0] == 0:
        return 1.0
    _, counts = np.unique(cov.T, axis=0, return_counts=True)
    same = float(np.sum(counts * (counts - 1) // 2))
    total = PLACEMENT_MODES * (PLACEMENT_MODES - 1) // 2
    return same / total


# --------------------------------------------------------------------------- blackbox adapters

def _rastrigin_bb(x):
    return [rastrigin(x)]


def _polak3_bb(x):
    return [polak3(x)]


def _toy_bb(x, variant="printed"):
    return list(toy_constrained(float(x[0]), float(x[1]), variant))


def _placement_bb(x):
    return [synthetic_placement(np.round(x))]


# --------------------------------------------------------------------------- specs

@dataclass(frozen=True)
class BenchmarkSpec:
    name: str
    x_vars: tuple[VariableSpec, ...]
    y_vars: tuple[VariableSpec, ...]
    objective: LinearExpr | None
    sense: str
    constraints: tuple[Constraint, ...] = ()
    blackbox: Callable | None = None
    known_best: float | None = None
    known_best_note: str = ""
    initial_samples: int = 2
    time_budget: float | None = None
    description: str = ""
    external: bool = False

    def problem(self, extra_constraints: Sequence[Constraint] = ()) -> Problem:
        if self.external:
            raise ExternalSimulatorRequired(f"{self.name}: external simulator required")
        bb = Blackbox(self.blackbox, len(self.x_vars), len(self.y_vars), self.name)
        return Problem(self.x_vars, self.y_vars, self.objective, bb, self.sense,
                       tuple(self.constraints) + tuple(extra_constraints), name=self.name)


def rastrigin_spec(n: int = 1) -> BenchmarkSpec:
    names = ["x"] if n == 1 else [f"x{i}" for i in range(n)]
    xs = tuple(VariableSpec(nm, CONTINUOUS, -RASTRIGIN_BOUND, RASTRIGIN_BOUND) for nm in names)
    return BenchmarkSpec(
        name="rastrigin" if n == 1 else f"rastrigin{n}d",
        x_vars=xs, y_vars=(VariableSpec("y", CONTINUOUS),), objective=LinearExpr.var("y"),
        sense=MAXIMIZE, blackbox=_rastrigin_bb,
        known_best=n * RASTRIGIN_MAX_1D, known_best_note="analytic maximum at |x_i| = 4.5229",
        initial_samples=2, description="maximize the Rastrigin function over its box")


def polak3_spec() -> BenchmarkSpec:
    xs = tuple(VariableSpec(f"x{i}", CONTINUOUS, -1.0, 1.0) for i in range(1, 12))
    return BenchmarkSpec(
        name="polak3", x_vars=xs, y_vars=(VariableSpec("y", CONTINUOUS),), objective=LinearExpr.var("y"),
        sense=MINIMIZE, blackbox=_polak3_bb, known_best=POLAK3_BEST_KNOWN,
        known_best_note="best known minimax value, confirmed by a local epigraph solve",
        initial_samples=20, time_budget=2000.0,
        description="minimize the largest of ten transcendental sums")


def toy_constrained_spec(variant: str = "printed") -> BenchmarkSpec:
    lo = -1.0 if variant == "printed" else 0.0
    xs = (VariableSpec("x1", CONTINUOUS, lo, 1.0), VariableSpec("x2", CONTINUOUS, lo, 1.0))
    ys = (VariableSpec("v1", CONTINUOUS), VariableSpec("v2", CONTINUOUS))
    cons = (Constraint(LinearExpr.var("v1"), ">=", 0.0, "v1_nonneg"),
            Constraint(LinearExpr.var("v2"), ">=", 0.0, "v2_nonneg"))
    known = -1.25 if variant == "printed" else TOY_SOURCE_OPTIMUM
    note = ("grid and local-solve optimum at (-1, -0.25)" if variant == "printed"
            else "optimum near (0.1954, 0.4044)")
    return BenchmarkSpec(
        name="toy_constrained" if variant == "printed" else "toy_constrained_source",
        x_vars=xs, y_vars=ys, objective=LinearExpr({"x1": 1.0, "x2": 1.0}), sense=MINIMIZE,
        constraints=cons, blackbox=functools.partial(_toy_bb, variant=variant),
        known_best=known, known_best_note=note, initial_samples=10,
        description="minimize x1 + x2 subject to two nonlinear blackbox constraints")


def failing_spec(d: int = 2, dead_band: tuple[float, float] = DEFAULT_DEAD_BAND) -> BenchmarkSpec:
    lo, hi = (float(v) for v in dead_band)
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError("dead_band must be an interval inside [0, 1]")
    bb = failing_blackbox if (lo, hi) == DEFAULT_DEAD_BAND else functools.partial(failing_blackbox, dead_band=(lo, hi))
    xs = tuple(VariableSpec(f"x{i}", CONTINUOUS, 0.0, 1.0) for i in range(d))
    return BenchmarkSpec(
        name="failing_blackbox" if d == 2 else f"failing_blackbox{d}d",
        x_vars=xs, y_vars=(VariableSpec("y", CONTINUOUS),), objective=LinearExpr.var("y"),
        sense=MAXIMIZE, blackbox=bb, initial_samples=4,
        description=f"maximize a smooth multimodal sum that is undefined for x0 in [{lo:g}, {hi:g}]")


def placement_spec() -> BenchmarkSpec:
    xs = tuple(VariableSpec.binary(f"s{i}") for i in range(PLACEMENT_SENSORS))
    budget = Constraint(LinearExpr({v.name: 1.0 for v in xs}), "<=", float(PLACEMENT_BUDGET), "sensor_budget")
    return BenchmarkSpec(
        name="synthetic_placement", x_vars=xs, y_vars=(VariableSpec("score", CONTINUOUS),),
        objective=LinearExpr.var("score"), sense=MINIMIZE, constraints=(budget,),
        blackbox=_placement_bb, initial_samples=30,
        description="choose at most 12 of 40 sensors to minimize indistinguishable failure pairs")


def _external(name: str, description: str) -> BenchmarkSpec:
    return BenchmarkSpec(name=name, x_vars=(), y_vars=(), objective=None, sense=MAXIMIZE,
                         description=description, external=True)


EXTERNAL_BENCHMARKS = {
    "boat": "hull design against a hydrodynamics simulator",
    "lunar_lander": "controller tuning in a physics game environment",
    "hexapod": "gait parameters for a legged-robot simulator",
    "acrobot": "controller for an underactuated pendulum simulator",
    "rover": "trajectory planning over a terrain cost model",
    "bus118": "sensor placement on a 118-bus power-grid simulation",
}


def get_benchmark(name: str, **params) -> BenchmarkSpec:
    """Look up a benchmark by name; ``params`` are benchmark-specific (``n``, ``d``, ``variant``, ``dead_band``)."""
    if name == "rastrigin":
        return rastrigin_spec(int(params.get("n", 1)))
    if name == "polak3":
        return polak3_spec()
    if name == "toy_constrained":
        return toy_constrained_spec(params.get("variant", "printed"))
    if name == "toy_constrained_source":
        return toy_constrained_spec("source")
    if name == "failing_blackbox":
        return failing_spec(int(params.get("d", 2)), tuple(params.get("dead_band", DEFAULT_DEAD_BAND)))
    if name == "synthetic_placement":
        return placement_spec()
    if name in EXTERNAL_BENCHMARKS:
        return _external(name, EXTERNAL_BENCHMARKS[name])
    raise KeyError(f"unknown benchmark {name!r}")


BENCHMARK_NAMES = ("rastrigin", "polak3", "toy_constrained", "toy_constrained_source",
                   "failing_blackbox", "synthetic_placement", *EXTERNAL_BENCHMARKS)


# --------------------------------------------------------------------------- baseline

def random_search(problem: Problem, eval_budget: int, seed: int = 0,
                  time_budget: float | None = math.inf, eval_timeout: float | None = None) -> RunResult:
    """Evaluate ``eval_budget`` uniform draws; the best feasible one wins."""
    if time_budget is None:
        time_budget = math.inf
    if eval_budget < 1:
        raise ValueError("eval_budget must be >= 1")
    _require_valid(problem)
    cfg = EngineConfig(max_iterations=eval_budget, seed=seed, eval_timeout=eval_timeout,
                       time_budget=time_budget, max_evaluations=eval_budget)
    rec = _Recorder(problem, cfg)
    gen = SampleGenerator(problem.x_vars, seed)
    n = 0
    for n in range(1, eval_budget + 1):
        x = round_discrete(problem, gen.sample_uniform())
        rec.record(n, x, rec.evaluate(x), RANDOM_SAMPLE)
        if rec.out_of_time():
            break
    return rec.result(BUDGET_EXHAUSTED, n)
