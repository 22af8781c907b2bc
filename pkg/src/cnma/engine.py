"""The sequential learning-from-failure loop.

Each iteration retrains a ReLU surrogate on every successful evaluation so
far, encodes it as a MILP together with the problem's objective and linear
constraints, solves it, and evaluates the proposed point on the real
blackbox. The evaluated point always joins the training pool, whether or not
it satisfies the constraints; it joins the solution list only when it does.
When the MILP has no usable solution, proposes a point that was already
evaluated, or the evaluation fails, a uniformly drawn point is evaluated
instead.
"""

from __future__ import annotations

import concurrent.futures
import csv
import io
import json
import logging
import math
import os
import time
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np

from .encoding import nn_to_milp
from .milp import solve_milp
from .problem import (
    MAXIMIZE,
    Constraint,
    EvalResult,
    InvalidProblemError,
    Problem,
    Sample,
    check_constraints,
    round_discrete,
    validate_problem,
)
from .sampling import SampleGenerator
from .surrogate import Architecture, TooFewSamplesError, TrainConfig, train

log = logging.getLogger("cnma.engine")

INITIAL_SAMPLE = "initial_sample"
MILP_SOLVED = "milp_solved"
RANDOM_FALLBACK = "milp_infeasible_random_fallback"
EVAL_FAILED = "eval_failed"
FAILURE_REPLACEMENT = "failure_replacement"
ACCEPTED = "accepted"
RANDOM_SAMPLE = "random_sample"
DUPLICATE_FALLBACK = "duplicate_random_fallback"
EVENTS = (INITIAL_SAMPLE, MILP_SOLVED, RANDOM_FALLBACK, EVAL_FAILED, FAILURE_REPLACEMENT, ACCEPTED,
          RANDOM_SAMPLE, DUPLICATE_FALLBACK)
DUPLICATE_POLICIES = ("resample", "evaluate")

BUDGET_EXHAUSTED = "budget_exhausted"
THRESHOLD_MET = "threshold_met"
ITERATIONS_EXHAUSTED = "iterations_exhausted"

REPLACEMENT_CAP = 10
TRACE_COLUMNS = ["iteration", "wall_seconds", "cumulative_evaluations", "best_objective", "event"]


@dataclass(frozen=True)
class EngineConfig:
    n_initial_samples: int = 2
    max_iterations: int = 100
    time_budget: float = math.inf
    objective_threshold: float | None = None
    architecture: Architecture = field(default_factory=lambda: Architecture((35, 10)))
    train_config: TrainConfig = field(default_factory=TrainConfig)
    milp_time_limit: float = 30.0
    seed: int = 0
    eval_timeout: float | None = None
    max_evaluations: int | None = None
    stop_objective: float | None = None
    """Halt once a feasible incumbent reaches this value; unlike
    ``objective_threshold`` it adds nothing to the MILP."""
    big_m_mode: str = "interval"
    gap_tol: float = 1e-6
    initial_points: tuple[tuple[float, ...], ...] | None = None
    """Fixed starting points used instead of random draws."""
    duplicate_policy: str = "resample"
    """``resample``: a proposal equal to an already evaluated point is replaced
    by a random draw. ``evaluate``: it is evaluated again."""

    def __post_init__(self):
        if not isinstance(self.architecture, Architecture):
            object.__setattr__(self, "architecture", Architecture(tuple(self.architecture)))
        if self.initial_points is not None:
            object.__setattr__(self, "initial_points",
                               tuple(tuple(float(v) for v in p) for p in self.initial_points))
        if self.n_initial_samples < 2:
            raise ValueError("n_initial_samples must be >= 2")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.time_budget > 0:
            raise ValueError("time_budget must be > 0")
        if not self.milp_time_limit > 0:
            raise ValueError("milp_time_limit must be > 0")
        if self.eval_timeout is not None and not self.eval_timeout > 0:
            raise ValueError("eval_timeout must be > 0")
        if self.max_evaluations is not None and self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")
        if self.big_m_mode not in ("interval", "fixed"):
            raise ValueError(f"unknown big_m_mode {self.big_m_mode!r}")
        if self.duplicate_policy not in DUPLICATE_POLICIES:
            raise ValueError(f"duplicate_policy must be one of {DUPLICATE_POLICIES}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["architecture"] = list(self.architecture.hidden_layers)
        d["time_budget"] = None if math.isinf(self.time_budget) else self.time_budget
        if self.initial_points is not None:
            d["initial_points"] = [list(p) for p in self.initial_points]
        return d


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    wall_seconds: float
    cumulative_evaluations: int
    best_objective: float | None
    event: str
    worker_id: int | None = None


class RunTrace:
    """Chronological rows, one per blackbox evaluation plus a final ``accepted`` row."""

    def __init__(self, rows: Iterable[TraceRow] = ()):
        self.rows: list[TraceRow] = list(rows)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def best_series(self) -> list[tuple[int, float, float | None]]:
        """``(cumulative_evaluations, wall_seconds, best_objective)`` per row."""
        return [(r.cumulative_evaluations, r.wall_seconds, r.best_objective) for r in self.rows]

    def to_csv(self, target=None, with_worker_id: bool | None = None) -> str:
        if with_worker_id is None:
            with_worker_id = any(r.worker_id is not None for r in self.rows)
        cols = TRACE_COLUMNS + (["worker_id"] if with_worker_id else [])
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows:
            row = [r.iteration, f"{r.wall_seconds:.6f}", r.cumulative_evaluations,
                   "" if r.best_objective is None else repr(r.best_objective), r.event]
            if with_worker_id:
                row.append("" if r.worker_id is None else r.worker_id)
            w.writerow(row)
        text = buf.getvalue()
        if target is not None:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, source) -> RunTrace:
        """Read a trace from a path or from CSV text."""
        if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
            with open(source, newline="") as fh:
                text = fh.read()
        else:
            text = str(source)
        reader = csv.DictReader(io.StringIO(text))
        missing = set(TRACE_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"trace is missing columns {sorted(missing)}")
        rows = []
        for rec in reader:
            best = rec["best_objective"]
            wid = rec.get("worker_id")
            rows.append(TraceRow(int(rec["iteration"]), float(rec["wall_seconds"]),
                                 int(rec["cumulative_evaluations"]), float(best) if best else None,
                                 rec["event"], int(wid) if wid not in (None, "") else None))
        return cls(rows)


@dataclass(frozen=True)
class Solution:
    x: tuple[float, ...]
    y: tuple[float, ...]
    objective: float


@dataclass
class Proposal:
    """What one worker's train-encode-solve step produced."""

    iteration: int
    worker_id: int
    architecture: str
    milp_status: str
    x: tuple[float, ...] | None = None
    predicted_y: tuple[float, ...] | None = None
    predicted_objective: float | None = None
    train_mse: float | None = None
    nodes: int = 0
    train_seconds: float = 0.0
    milp_seconds: float = 0.0


@dataclass
class RunResult:
    best: Solution | None
    trace: RunTrace
    termination: str
    sense: str = MAXIMIZE
    samples: list[Sample] = field(default_factory=list)
    events: list[str] = field(default_factory=list)
    """Event per entry of ``samples`` (same order)."""
    proposals: list[Proposal] = field(default_factory=list)
    iterations: int = 0
    wall_seconds: float = 0.0

    @property
    def evaluations(self) -> int:
        return len(self.samples)

    @property
    def best_objective(self) -> float | None:
        return None if self.best is None else self.best.objective

    def to_dict(self) -> dict:
        return {
            "best": None if self.best is None else {
                "x": list(self.best.x), "y": list(self.best.y), "objective": self.best.objective},
            "feasible": self.best is not None,
            "termination": self.termination,
            "sense": self.sense,
            "iterations": self.iterations,
            "evaluations": self.evaluations,
            "failed_evaluations": sum(not s.ok for s in self.samples),
            "wall_seconds": self.wall_seconds,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def is_acceptable(result_so_far: RunResult, config: EngineConfig, budget_exhausted: bool = False) -> bool:
    """Whether the run may halt with its current incumbent."""
    best = result_so_far.best
    if best is None:
        return False
    if budget_exhausted:
        return True
    thr = config.objective_threshold
    if thr is None:
        return False
    return best.objective >= thr if result_so_far.sense == MAXIMIZE else best.objective <= thr


def _met(value: float | None, target: float | None, maximize: bool) -> bool:
    if value is None or target is None:
        return False
    return value >= target if maximize else value <= target


# --------------------------------------------------------------------------- evaluation

def _coerce_result(out: Any, n_outputs: int, duration: float) -> EvalResult:
    if isinstance(out, EvalResult):
        if not out.ok:
            return EvalResult.failure(out.error or "blackbox reported failure", duration)
        out = out.y
    y = np.atleast_1d(np.asarray(out, dtype=float)).ravel()
    if y.shape[0] != n_outputs:
        return EvalResult.failure(f"blackbox returned {y.shape[0]} outputs, expected {n_outputs}", duration)
    if not np.all(np.isfinite(y)):
        return EvalResult.failure("non-finite output", duration)
    return EvalResult.success(y, duration)


_timeout_pool: concurrent.futures.ThreadPoolExecutor | None = None


def _timeout_executor() -> concurrent.futures.ThreadPoolExecutor:
    global _timeout_pool
    if _timeout_pool is None:
        _timeout_pool = concurrent.futures.ThreadPoolExecutor(max_workers=4, thread_name_prefix="cnma-eval")
    return _timeout_pool


def evaluate_candidate(blackbox: Callable, x: Sequence[float], eval_timeout: float | None = None,
                       n_outputs: int | None = None) -> EvalResult:
    """Call the blackbox; timeouts, exceptions and non-finite outputs become failures.

    A timed-out call keeps running in its worker thread (Python threads cannot
    be cancelled); its eventual result is discarded.
    """
    arr = np.asarray(x, dtype=float)
    if n_outputs is None:
        n_outputs = getattr(blackbox, "n_outputs", None)
    start = time.perf_counter()
    try:
        if eval_timeout is None:
            out = blackbox(arr)
        else:
            fut = _timeout_executor().submit(blackbox, arr)
            try:
                out = fut.result(timeout=eval_timeout)
            except concurrent.futures.TimeoutError:
                fut.cancel()
                return EvalResult.failure(f"timed out after {eval_timeout}s", time.perf_counter() - start)
    except Exception as exc:  # noqa: BLE001  any blackbox error is an evaluation failure
        return EvalResult.failure(f"{type(exc).__name__}: {exc}", time.perf_counter() - start)
    duration = time.perf_counter() - start
    if n_outputs is None:
        if isinstance(out, EvalResult):
            n_outputs = len(out.y) if out.ok else 0
        else:
            n_outputs = np.atleast_1d(np.asarray(out, dtype=float)).size
    return _coerce_result(out, n_outputs, duration)


# --------------------------------------------------------------------------- one worker step

def iteration_seed(seed: int, iteration: int) -> int:
    """Weight-initialization seed for one training run."""
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def threshold_constraints(problem: Problem, threshold: float | None) -> list[Constraint]:
    if threshold is None:
        return []
    obj = problem.objective
    c = obj >= threshold if problem.maximize else obj <= threshold
    return [Constraint(c.lhs, c.sense, c.rhs, "objective_threshold")]


def propose(problem: Problem, samples: Sequence[Sample], architecture: Architecture,
            train_config: TrainConfig, seed: int, iteration: int, worker_id: int,
            milp_time_limit: float, big_m_mode: str = "interval", gap_tol: float = 1e-6,
            extra_constraints: Sequence[Constraint] = ()) -> Proposal:
    """Train a surrogate on ``samples``, encode and solve; no blackbox calls."""
    prop = Proposal(iteration, worker_id, str(architecture), "too_few_samples")
    t0 = time.perf_counter()
    try:
        net = train(samples, architecture, replace(train_config, weight_init_seed=iteration_seed(seed, iteration)))
    except TooFewSamplesError:
        return prop
    prop.train_seconds = time.perf_counter() - t0
    prop.train_mse = net.train_mse
    t1 = time.perf_counter()
    milp = nn_to_milp(net, problem, big_m_mode=big_m_mode, extra_constraints=extra_constraints)
    sol = solve_milp(milp, time_limit=milp_time_limit, gap_tol=gap_tol)
    prop.milp_seconds = time.perf_counter() - t1
    prop.milp_status = sol.status
    prop.nodes = sol.nodes_explored
    if sol.has_solution:
        prop.x = round_discrete(problem, [sol.assignment[n] for n in problem.x_names])
        prop.predicted_y = tuple(sol.assignment[n] for n in problem.y_names)
        prop.predicted_objective = sol.objective
    return prop


# --------------------------------------------------------------------------- bookkeeping

class _Recorder:
    """Pool, solutions, incumbent and trace shared by both engines."""

    def __init__(self, problem: Problem, config: EngineConfig):
        self.problem = problem
        self.config = config
        self.start = time.perf_counter()
        self.trace = RunTrace()
        self.samples: list[Sample] = []
        self.events: list[str] = []
        self.best: Solution | None = None
        self.proposals: list[Proposal] = []
        self.n_outputs = len(problem.y_vars)

    def elapsed(self) -> float:
        return time.perf_counter() - self.start

    def evaluate(self, x) -> EvalResult:
        return evaluate_candidate(self.problem.blackbox, x, self.config.eval_timeout, self.n_outputs)

    def record(self, iteration: int, x, result: EvalResult, event: str, worker_id: int | None = None) -> None:
        sample = Sample(tuple(float(v) for v in x), result)
        self.samples.append(sample)
        if not result.ok:
            event = EVAL_FAILED
        else:
            assignment = self.problem.assignment(sample.x, result.y)
            if check_constraints(self.problem, assignment):
                value = self.problem.objective_value(sample.x, result.y)
                if self.best is None or self.problem.is_better(value, self.best.objective):
                    self.best = Solution(sample.x, result.y, value)
        self.events.append(event)
        self.trace.append(TraceRow(iteration, self.elapsed(), len(self.samples),
                                   self.best_objective, event, worker_id))

    @property
    def best_objective(self) -> float | None:
        return None if self.best is None else self.best.objective

    def is_duplicate(self, x, also: Iterable[Sequence[float]] = ()) -> bool:
        """True when ``x`` matches an evaluated point (or one of ``also``) and
        the duplicate policy says to resample."""
        if self.config.duplicate_policy != "resample":
            return False
        pts = [s.x for s in self.samples] + [tuple(p) for p in also]
        if not pts:
            return False
        tol = self._dup_tol()
        diff = np.abs(np.asarray(pts, dtype=float) - np.asarray(x, dtype=float))
        return bool(np.any(np.all(diff <= tol, axis=1)))

    def _dup_tol(self) -> np.ndarray:
        widths = np.asarray([v.upper - v.lower for v in self.problem.x_vars], dtype=float)
        return 1e-9 * (1.0 + np.where(np.isfinite(widths), widths, 0.0))

    def ok_samples(self) -> list[Sample]:
        return [s for s in self.samples if s.ok]

    def out_of_evaluations(self) -> bool:
        cap = self.config.max_evaluations
        return cap is not None and len(self.samples) >= cap

    def out_of_time(self) -> bool:
        return self.elapsed() >= self.config.time_budget

    def target_met(self) -> bool:
        m = self.problem.maximize
        return (_met(self.best_objective, self.config.objective_threshold, m)
                or _met(self.best_objective, self.config.stop_objective, m))

    def initial_samples(self, generator: SampleGenerator) -> None:
        cfg = self.config
        points = list(cfg.initial_points or [])
        want = len(points) if points else cfg.n_initial_samples
        draws = 0
        n_ok = 0
        while n_ok < want and draws < REPLACEMENT_CAP * want and not self.out_of_evaluations():
            x = points[draws] if draws < len(points) else generator.sample_uniform()
            x = round_discrete(self.problem, x)
            res = self.evaluate(x)
            self.record(0, x, res, INITIAL_SAMPLE)
            draws += 1
            n_ok += res.ok

    def result(self, termination: str, iterations: int) -> RunResult:
        if termination == THRESHOLD_MET:
            self.trace.append(TraceRow(iterations, self.elapsed(), len(self.samples),
                                       self.best_objective, ACCEPTED))
        return RunResult(self.best, self.trace, termination, self.problem.sense, self.samples,
                         self.events, self.proposals, iterations, self.elapsed())


def _require_valid(problem: Problem) -> None:
    defects = validate_problem(problem)
    if defects:
        raise InvalidProblemError(defects)


# --------------------------------------------------------------------------- sequential loop

def cnma_optimize(problem: Problem, config: EngineConfig | None = None) -> RunResult:
    config = config or EngineConfig()
    _require_valid(problem)
    rec = _Recorder(problem, config)
    generator = SampleGenerator(problem.x_vars, config.seed)
    extra = threshold_constraints(problem, config.objective_threshold)

    rec.initial_samples(generator)
    termination = ITERATIONS_EXHAUSTED
    done = 0
    if rec.target_met():
        return rec.result(THRESHOLD_MET, 0)
    for it in range(1, config.max_iterations + 1):
        if rec.out_of_time() or rec.out_of_evaluations():
            termination = BUDGET_EXHAUSTED
            break
        prop = propose(problem, rec.ok_samples(), config.architecture, config.train_config,
                       config.seed, it, 0, config.milp_time_limit, config.big_m_mode,
                       config.gap_tol, extra)
        rec.proposals.append(prop)
        need_random = True
        follow_up = RANDOM_FALLBACK
        if prop.x is not None and rec.is_duplicate(prop.x):
            follow_up = DUPLICATE_FALLBACK
        elif prop.x is not None:
            res = rec.evaluate(prop.x)
            rec.record(it, prop.x, res, MILP_SOLVED)
            need_random = not res.ok
            follow_up = FAILURE_REPLACEMENT
        attempts = 0
        while need_random and attempts < REPLACEMENT_CAP and not rec.out_of_evaluations():
            x = round_discrete(problem, generator.sample_uniform())
            res = rec.evaluate(x)
            rec.record(it, x, res, follow_up)
            need_random = not res.ok
            attempts += 1
        done = it
        log.info("iteration %d: milp %s, evaluations %d, best %s", it, prop.milp_status,
                 len(rec.samples), rec.best_objective)
        if rec.target_met():
            termination = THRESHOLD_MET
            break
    else:
        if rec.out_of_evaluations():
            termination = BUDGET_EXHAUSTED
    return rec.result(termination, done)
