"""End-to-end acceptance checks; each test prints one PASS/FAIL line.

Stochastic criteria run five trials with base seeds 0, 1000, ..., 4000. The
parallel engine gives worker j the seed ``base + j``, so widely spaced bases
keep the trials' random streams disjoint.
"""

import itertools
import threading
import time
from collections import Counter
from dataclasses import replace

import numpy as np
import pytest

from cnma import parallel as parallel_module
from cnma.benchmarks import get_benchmark, random_search, synthetic_placement
from cnma.engine import EVAL_FAILED, EngineConfig, cnma_optimize
from cnma.milp import INFEASIBLE, OPTIMAL, random_milp, solve_milp
from cnma.parallel import ParallelConfig, parallel_cnma
from cnma.problem import check_constraints
from cnma.surrogate import Architecture, TrainConfig

from .helpers import encoding_gap, random_network
from .oracles import enumerate_binaries

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

SEEDS = (0, 1000, 2000, 3000, 4000)
RASTRIGIN_MAX = 40.353


def _fmt(values, digits=4):
    return "[" + ", ".join("none" if v is None else f"{v:.{digits}f}" for v in values) + "]"


def _revalidates(problem, best):
    y = problem.blackbox(np.asarray(best.x))
    y = tuple(np.atleast_1d(np.asarray(getattr(y, "y", y), dtype=float)))
    return y == tuple(best.y) and check_constraints(problem, problem.assignment(best.x, y)).satisfied


def test_criterion_1_encoding_equivalence(verdict):
    rng = np.random.default_rng(7)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n_in = int(rng.integers(1, 4))
        hidden = [int(rng.integers(1, 9))] + ([int(rng.integers(1, 5))] if rng.random() < 0.5 else [])
        net = random_network(rng, n_in, hidden)
        box = [(-2.0, 2.0)] * n_in
        for x0 in rng.uniform(-2.0, 2.0, size=(10, n_in)):
            worst = max(worst, encoding_gap(net, box, x0))
    elapsed = time.perf_counter() - start
    ok = verdict(1, "network encoding equivalence", worst <= 1e-5 and elapsed < 60.0,
                 f"1000 fixed-input MILPs, worst |y - forward| = {worst:.2e} (tol 1e-5), {elapsed:.1f}s (limit 60s)")
    assert ok


def test_criterion_2_solver_oracle(verdict):
    rng = np.random.default_rng(8)
    start = time.perf_counter()
    mismatches = []
    for k in range(200):
        milp = random_milp(rng, int(rng.integers(1, 9)), int(rng.integers(0, 4)), int(rng.integers(1, 7)),
                           sense=["maximize", "minimize"][k % 2])
        sol = solve_milp(milp)
        expected = enumerate_binaries(milp)
        if expected is None:
            good = sol.status == INFEASIBLE
        else:
            good = sol.status == OPTIMAL and abs(sol.objective - expected) <= 1e-6
        if not good:
            mismatches.append(k)
    elapsed = time.perf_counter() - start
    ok = verdict(2, "branch-and-bound vs enumeration", not mismatches and elapsed < 120.0,
                 f"{200 - len(mismatches)}/200 match within 1e-6, {elapsed:.1f}s (limit 120s)")
    assert ok


def test_criterion_3_rastrigin_parallel(verdict):
    problem = get_benchmark("rastrigin").problem()
    bests, iterations = [], []
    for seed in SEEDS:
        res = parallel_cnma(problem, ParallelConfig(
            workers=10, n_initial_samples=2, max_iterations=15, stop_objective=40.0,
            seed=seed, milp_time_limit=3.0, executor="serial"))
        assert res.best is None or _revalidates(problem, res.best)
        bests.append(res.best_objective)
        iterations.append(res.iterations)
    hits = sum(b is not None and b >= 40.0 for b in bests)
    ok = verdict(3, "parallel Rastrigin, M=10", hits >= 4,
                 f"{hits}/5 seeds reach >= 40.0 within 15 iterations (need 4); best {_fmt(bests)}, "
                 f"iterations {iterations}")
    assert ok


def test_criterion_4_rastrigin_floor_constraint(verdict):
    spec = get_benchmark("rastrigin")
    problem = spec.problem([spec.objective >= 35.0])
    bests, iterations = [], []
    for seed in SEEDS:
        res = cnma_optimize(problem, EngineConfig(
            max_iterations=120, stop_objective=RASTRIGIN_MAX - 0.5, seed=seed, milp_time_limit=3.0))
        assert res.best is None or _revalidates(problem, res.best)
        bests.append(res.best_objective)
        iterations.append(res.iterations)
    hits = sum(b is not None and b >= RASTRIGIN_MAX - 0.5 for b in bests)
    ok = verdict(4, "sequential Rastrigin with y >= 35", hits >= 4,
                 f"{hits}/5 seeds within 0.5 of 40.353 in 120 iterations (need 4); best {_fmt(bests)}, "
                 f"iterations {iterations}")
    assert ok


def test_criterion_5_toy_constrained(verdict):
    problem = get_benchmark("toy_constrained_source").problem()
    bests, evaluations = [], []
    for seed in SEEDS:
        res = cnma_optimize(problem, EngineConfig(
            n_initial_samples=10, architecture=Architecture((35, 10)), max_iterations=140,
            max_evaluations=150, stop_objective=0.65, seed=seed, milp_time_limit=3.0))
        assert res.best is None or _revalidates(problem, res.best)
        bests.append(res.best_objective)
        evaluations.append(res.evaluations)
    hits = sum(b is not None and b <= 0.65 for b in bests)
    ok = verdict(5, "constrained toy problem", hits >= 4,
                 f"{hits}/5 seeds reach <= 0.65 within 150 evaluations (need 4); best {_fmt(bests)}, "
                 f"evaluations {evaluations}")
    assert ok


def test_criterion_6_polak3_sample_efficiency(verdict):
    problem = get_benchmark("polak3").problem()
    random_bests = [random_search(problem, 700, seed=seed).best_objective for seed in SEEDS]
    cnma_bests, evaluations = [], []
    for seed in SEEDS:
        res = cnma_optimize(problem, EngineConfig(
            n_initial_samples=20, max_iterations=250, max_evaluations=700, seed=seed,
            milp_time_limit=0.5, train_config=TrainConfig(epochs=500)))
        assert _revalidates(problem, res.best)
        cnma_bests.append(res.best_objective)
        evaluations.append(res.evaluations)
    cnma_median = float(np.median(cnma_bests))
    random_median = float(np.median(random_bests))
    ok = verdict(6, "Polak3 at a 700-evaluation budget", cnma_median < random_median,
                 f"median best CNMA {cnma_median:.4f} ({max(evaluations)} evaluations at most) vs "
                 f"random search {random_median:.4f} (700 evaluations); CNMA {_fmt(cnma_bests)}, "
                 f"random {_fmt(random_bests)}")
    assert ok


def _failing_grid_optimum(blackbox, points=401):
    grid = np.linspace(0.0, 1.0, points)
    return max(r.y[0] for a in grid for b in grid if (r := blackbox([a, b])).ok)


def test_criterion_7_failure_resilience(verdict):
    spec = get_benchmark("failing_blackbox", d=2, dead_band=(0.3, 0.7))
    problem = spec.problem()
    optimum = _failing_grid_optimum(spec.blackbox)
    rows = []
    for seed in SEEDS:
        res = cnma_optimize(problem, EngineConfig(n_initial_samples=10, max_iterations=50, seed=seed,
                                                  milp_time_limit=1.0))
        failures = res.events.count(EVAL_FAILED)
        close = res.best is not None and res.best.objective >= 0.95 * optimum and _revalidates(problem, res.best)
        rows.append((res.iterations == 50, failures, res.best_objective, close))
    good = sum(done and failures >= 1 and close for done, failures, _, close in rows)
    ok = verdict(7, "failing blackbox, 40% dead band", good >= 4,
                 f"{good}/5 seeds complete 50 iterations with >= 1 eval_failed and best within 5% of the "
                 f"grid optimum {optimum:.4f} (need 4); failures {[r[1] for r in rows]}, "
                 f"best {_fmt([r[2] for r in rows])}")
    assert ok


def _random_feasible_best(seed, draws=1000):
    rng = np.random.default_rng(seed)
    best, n = 1.0, 0
    while n < draws:
        x = (rng.random(40) < 0.5).astype(float)
        if x.sum() <= 12:
            best = min(best, synthetic_placement(x))
            n += 1
    return best


def test_criterion_8_discrete_placement(verdict):
    problem = get_benchmark("synthetic_placement").problem()
    rows = []
    for seed in SEEDS:
        res = parallel_cnma(problem, ParallelConfig(
            workers=5, n_initial_samples=30, max_iterations=20, seed=seed, milp_time_limit=1.0,
            executor="serial"))
        feasible = res.best is not None and _revalidates(problem, res.best)
        rows.append((res.best_objective, _random_feasible_best(seed), feasible, res.evaluations))
    good = sum(feasible and b is not None and b <= r for b, r, feasible, _ in rows)
    ok = verdict(8, "sensor placement, M=5", good >= 3,
                 f"{good}/5 seeds at or below the best of 1000 random feasible draws (need 3); "
                 f"CNMA {_fmt([r[0] for r in rows])} with {rows[0][3]} evaluations, "
                 f"random {_fmt([r[1] for r in rows])}")
    assert ok


# --------------------------------------------------------------------------- criterion 9

FAST = {"train_config": TrainConfig(epochs=300), "milp_time_limit": 2.0}


def _monotone(trace, maximize=True):
    values = [row.best_objective for row in trace]
    return all(p is None or (c is not None and (c >= p if maximize else c <= p))
               for p, c in itertools.pairwise(values))


def _content(samples):
    return [(s.x, s.ok, s.y) for s in samples]


def _pools(result):
    pools, current = {}, Counter()
    for row, s in zip(result.trace, result.samples):
        current[(s.x, s.y)] += 1
        pools[row.iteration] = Counter(current)
    return pools


def _sequential_checks(problem, seed):
    cfg = EngineConfig(max_iterations=6, seed=seed, architecture=Architecture((10,)), **FAST)
    a, b = cnma_optimize(problem, cfg), cnma_optimize(problem, cfg)
    growth = Counter(row.iteration for row in a.trace)
    return {
        "monotone": _monotone(a.trace),
        "growth": all(growth[i] == 1 for i in range(1, a.iterations + 1)) and growth[0] == 2,
        "determinism": _content(a.samples) == _content(b.samples) and a.events == b.events,
    }


def _parallel_checks(problem, seed):
    seen = {}
    lock = threading.Lock()
    real = parallel_module.propose

    def recording(problem_, samples, architecture, train_config, seed_, iteration, worker_id, *rest):
        with lock:
            seen[(iteration, worker_id)] = Counter((s.x, s.y) for s in samples)
        return real(problem_, samples, architecture, train_config, seed_, iteration, worker_id, *rest)

    cfg = ParallelConfig(workers=4, max_iterations=3, seed=seed, executor="thread",
                         architectures=(Architecture((10,)), Architecture((6, 4))), **FAST)
    parallel_module.propose = recording
    try:
        a = parallel_cnma(problem, cfg)
    finally:
        parallel_module.propose = real
    b = parallel_cnma(problem, replace(cfg, executor="serial"))
    pools = _pools(a)
    growth = Counter(row.iteration for row in a.trace)
    barrier = all(seen[(it, j)] == pools[it - 1] for it in range(1, a.iterations + 1) for j in range(4))
    return {
        "monotone": _monotone(a.trace),
        "growth": all(growth[i] == 4 for i in range(1, a.iterations + 1)),
        "barrier": barrier and _pools(b) == pools,
        "determinism": _content(a.samples) == _content(b.samples) and a.events == b.events,
    }


def test_criterion_9_engine_invariants(verdict):
    problem = get_benchmark("rastrigin").problem()
    start = time.perf_counter()
    failed = []
    for seed in (0, 1, 2):
        for name, good in _sequential_checks(problem, seed).items():
            if not good:
                failed.append(f"sequential/{name}/seed {seed}")
        for name, good in _parallel_checks(problem, seed).items():
            if not good:
                failed.append(f"parallel/{name}/seed {seed}")
    elapsed = time.perf_counter() - start
    ok = verdict(9, "engine invariants", not failed and elapsed < 60.0,
                 f"monotone incumbent, per-iteration growth, barrier multisets, determinism over 3 seeds x "
                 f"2 engines: {'all hold' if not failed else ', '.join(failed)}; {elapsed:.1f}s (limit 60s)")
    assert ok
