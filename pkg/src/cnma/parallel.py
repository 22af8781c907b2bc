"""Bulk-synchronous parallel variant: M surrogates per iteration share one pool.

Every worker trains its own network (its own architecture and seed) on the
same pool snapshot and proposes a point; all proposals are evaluated, and
workers without a usable (or a new) proposal contribute one random
evaluation instead.
New samples join the pool at the barrier in worker order, so results do not
depend on which executor ran the work.
"""

from __future__ import annotations

import concurrent.futures
import logging
import threading
from collections.abc import Iterable
from dataclasses import dataclass

from .engine import (
    BUDGET_EXHAUSTED,
    DUPLICATE_FALLBACK,
    FAILURE_REPLACEMENT,
    ITERATIONS_EXHAUSTED,
    MILP_SOLVED,
    RANDOM_FALLBACK,
    REPLACEMENT_CAP,
    THRESHOLD_MET,
    EngineConfig,
    RunResult,
    _Recorder,
    _require_valid,
    evaluate_candidate,
    propose,
    threshold_constraints,
)
from .problem import EvalResult, Problem, Sample, round_discrete
from .sampling import SampleGenerator
from .surrogate import Architecture

log = logging.getLogger("cnma.parallel")

DEFAULT_ARCHITECTURES = (
    Architecture((35, 10)), Architecture((10,)), Architecture((30,)), Architecture((35,)), Architecture((50,)),
)
EXECUTORS = ("serial", "thread", "process")


@dataclass(frozen=True)
class ParallelConfig(EngineConfig):
    workers: int = 5
    architectures: tuple[Architecture, ...] = DEFAULT_ARCHITECTURES
    base_seed: int | None = None
    """Worker j uses seed ``base_seed + j``; defaults to ``seed``."""
    executor: str = "thread"

    def __post_init__(self):
        super().__post_init__()
        archs = tuple(a if isinstance(a, Architecture) else Architecture(tuple(a)) for a in self.architectures)
        object.__setattr__(self, "architectures", archs)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not archs:
            raise ValueError("architectures must be non-empty")
        if self.executor not in EXECUTORS:
            raise ValueError(f"executor must be one of {EXECUTORS}")

    @property
    def effective_base_seed(self) -> int:
        return self.seed if self.base_seed is None else self.base_seed

    def architecture_for(self, worker: int) -> Architecture:
        return self.architectures[worker % len(self.architectures)]

    def to_dict(self) -> dict:
        d = super().to_dict()
        d["architectures"] = [list(a.hidden_layers) for a in self.architectures]
        return d


class SharedPool:
    """Append-only sample list; appends are serialized by a lock."""

    def __init__(self, samples: Iterable[Sample] = ()):
        self._lock = threading.Lock()
        self._items: list[Sample] = list(samples)

    def append(self, sample: Sample) -> None:
        with self._lock:
            self._items.append(sample)

    def extend(self, samples: Iterable[Sample]) -> None:
        samples = list(samples)
        with self._lock:
            self._items.extend(samples)

    def snapshot(self) -> tuple[Sample, ...]:
        with self._lock:
            return tuple(self._items)

    def __len__(self):
        with self._lock:
            return len(self._items)


def snapshot(pool: SharedPool) -> tuple[Sample, ...]:
    return pool.snapshot()


class _SerialExecutor:
    def submit(self, fn, *args, **kwargs):
        fut = concurrent.futures.Future()
        try:
            fut.set_result(fn(*args, **kwargs))
        except BaseException as exc:  # noqa: BLE001  re-raised by the future
            fut.set_exception(exc)
        return fut

    def shutdown(self, wait=True):
        pass


def _make_executor(kind: str, workers: int):
    if kind == "serial":
        return _SerialExecutor()
    if kind == "thread":
        return concurrent.futures.ThreadPoolExecutor(max_workers=workers, thread_name_prefix="cnma-worker")
    return concurrent.futures.ProcessPoolExecutor(max_workers=workers)


def _evaluate(problem: Problem, x, eval_timeout) -> EvalResult:
    return evaluate_candidate(problem.blackbox, x, eval_timeout, len(problem.y_vars))


def parallel_cnma(problem: Problem, config: ParallelConfig | None = None) -> RunResult:
    config = config or ParallelConfig()
    _require_valid(problem)
    rec = _Recorder(problem, config)
    base = config.effective_base_seed
    M = config.workers
    generators = [SampleGenerator(problem.x_vars, base + j) for j in range(M)]
    extra = threshold_constraints(problem, config.objective_threshold)
    pool = SharedPool()

    # worker 0's stream also supplies the initial samples, as in the sequential engine
    rec.initial_samples(generators[0])
    pool.extend(rec.samples)
    if rec.target_met():
        return rec.result(THRESHOLD_MET, 0)

    executor = _make_executor(config.executor, M)
    termination = ITERATIONS_EXHAUSTED
    done = 0
    try:
        for it in range(1, config.max_iterations + 1):
            if rec.out_of_time() or rec.out_of_evaluations():
                termination = BUDGET_EXHAUSTED
                break
            train_set = [s for s in pool.snapshot() if s.ok]
            futures = [executor.submit(propose, problem, train_set, config.architecture_for(j),
                                       config.train_config, base + j, it, j, config.milp_time_limit,
                                       config.big_m_mode, config.gap_tol, extra)
                       for j in range(M)]
            proposals = [f.result() for f in futures]
            rec.proposals.extend(proposals)

            budget = None if config.max_evaluations is None else config.max_evaluations - len(rec.samples)
            per_worker: list[list[tuple[tuple, EvalResult, str]]] = [[] for _ in range(M)]

            def take_slot():
                nonlocal budget
                if budget is None:
                    return True
                if budget <= 0:
                    return False
                budget -= 1
                return True

            pending = {}
            duplicates = set()
            claimed: list[tuple] = []
            for j, prop in enumerate(proposals):
                if prop.x is None:
                    continue
                if rec.is_duplicate(prop.x, claimed):
                    duplicates.add(j)
                elif take_slot():
                    claimed.append(prop.x)
                    pending[j] = (prop.x, executor.submit(_evaluate, problem, prop.x, config.eval_timeout))
            needs_random = []
            for j, prop in enumerate(proposals):
                if j in duplicates:
                    needs_random.append((j, DUPLICATE_FALLBACK))
                elif j in pending:
                    x, fut = pending[j]
                    res = fut.result()
                    per_worker[j].append((x, res, MILP_SOLVED))
                    if not res.ok:
                        needs_random.append((j, FAILURE_REPLACEMENT))
                elif prop.x is None:
                    needs_random.append((j, RANDOM_FALLBACK))

            for _ in range(REPLACEMENT_CAP):
                if not needs_random:
                    break
                batch = []
                for j, event in needs_random:
                    if not take_slot():
                        break
                    x = round_discrete(problem, generators[j].sample_uniform())
                    batch.append((j, event, x, executor.submit(_evaluate, problem, x, config.eval_timeout)))
                needs_random = []
                for j, event, x, fut in batch:
                    res = fut.result()
                    per_worker[j].append((x, res, event))
                    if not res.ok:
                        needs_random.append((j, event))

            # barrier: merge in worker order
            for j in range(M):
                for x, res, event in per_worker[j]:
                    rec.record(it, x, res, event, worker_id=j)
            pool.extend(rec.samples[len(pool):])
            done = it
            log.info("iteration %d: statuses %s, evaluations %d, best %s", it,
                     [p.milp_status for p in proposals], len(rec.samples), rec.best_objective)
            if rec.target_met():
                termination = THRESHOLD_MET
                break
        else:
            if rec.out_of_evaluations():
                termination = BUDGET_EXHAUSTED
    finally:
        executor.shutdown(wait=True)
    return rec.result(termination, done)
