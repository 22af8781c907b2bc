"""Best-bound branch-and-bound with depth-first plunging.

Each node re-solves its LP relaxation from scratch with :mod:`.simplex`.
Branching picks the integer variable whose fractional part is nearest 0.5;
the plunge follows the child that rounds toward the incumbent (toward the
nearest integer while there is none) and parks its sibling in the queue.

A Milp may carry a ``completion`` callable in ``milp.info``: given a node's
LP point it proposes a full assignment (for network encodings, the forward
pass at the LP's x). Proposals are accepted only after an explicit
feasibility and integrality check.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import Milp
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, _violation, solve_lp_arrays

INTEGRALITY_TOL = 1e-6
DEFAULT_GAP_TOL = 1e-6
DEFAULT_TIME_LIMIT = 30.0

FEASIBLE = "feasible"
TIMEOUT = "timeout"


@dataclass
class MilpSolution:
    status: str
    assignment: dict[str, float] = field(default_factory=dict)
    objective: float = math.nan
    bound: float = math.nan
    nodes_explored: int = 0
    x: np.ndarray | None = None
    lp_iterations: int = 0
    history: list[tuple[int, float, float]] = field(default_factory=list)
    """``(nodes, incumbent objective, global bound)`` checkpoints in problem sense."""

    @property
    def has_solution(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE)


def _gap_ok(incumbent: float, bound: float, gap_tol: float) -> bool:
    return incumbent - bound <= gap_tol * max(1.0, abs(incumbent))


def _acceptable(x, A, senses, b, lower, upper, int_idx) -> bool:
    xi = x[int_idx]
    if np.any(np.abs(xi - np.round(xi)) > INTEGRALITY_TOL):
        return False
    return _violation(A, senses, b, lower, upper, x) <= 1e-7


def _polish(c, A, senses, b, lo, hi, x, int_idx):
    """Re-solve with integers fixed at their rounded values.

    An LP point that is integral only up to the tolerance can carry continuous
    values that lean on the fractional residue (a big-M row lets ``h`` reach
    ``M * 1e-6`` when ``d = 1 - 1e-6``). Returns ``(point or None, lp iterations)``.
    """
    rounded = np.round(x[int_idx])
    if np.array_equal(rounded, x[int_idx]):
        return x.copy(), 0
    lo_f, hi_f = lo.copy(), hi.copy()
    lo_f[int_idx] = rounded
    hi_f[int_idx] = rounded
    res = solve_lp_arrays(c, A, senses, b, lo_f, hi_f)
    if res.status == OPTIMAL:
        xr = res.x.copy()
        xr[int_idx] = rounded
        return xr, res.iterations
    xr = x.copy()
    xr[int_idx] = rounded
    if _violation(A, senses, b, lo, hi, xr) <= 1e-7:
        return xr, res.iterations
    return None, res.iterations


def solve_milp(milp: Milp, time_limit: float = DEFAULT_TIME_LIMIT,
               gap_tol: float = DEFAULT_GAP_TOL, node_limit: int | None = None) -> MilpSolution:
    arr = milp.to_arrays()
    if not (np.all(np.isfinite(arr.lower)) and np.all(np.isfinite(arr.upper))):
        raise ValueError("branch-and-bound requires finite bounds on every variable")
    sign = -1.0 if arr.maximize else 1.0
    c = sign * arr.c  # internally minimize c @ x
    A, senses, b = arr.A, arr.senses, arr.b
    int_idx = np.flatnonzero(arr.integer)
    lower0 = arr.lower.copy()
    upper0 = arr.upper.copy()
    lower0[int_idx] = np.ceil(lower0[int_idx] - INTEGRALITY_TOL)
    upper0[int_idx] = np.floor(upper0[int_idx] + INTEGRALITY_TOL)

    deadline = time.perf_counter() + time_limit
    counter = itertools.count()
    heap: list = [(-math.inf, next(counter), lower0, upper0)]
    inc_val = math.inf
    inc_x = None
    nodes = 0
    lp_iters = 0
    timed_out = False
    root_status = None
    history: list[tuple[int, float, float]] = []
    completion = milp.info.get("completion")

    def to_sense(v):
        return sign * v

    def global_bound(current):
        best = heap[0][0] if heap else math.inf
        return min(best, current)

    def checkpoint(current):
        if inc_x is not None:
            history.append((nodes, to_sense(inc_val), to_sense(global_bound(current))))

    while heap:
        parent_bound, _, lo, hi = heapq.heappop(heap)
        if inc_x is not None and _gap_ok(inc_val, parent_bound, gap_tol):
            continue
        current_bound = parent_bound
        while True:
            if time.perf_counter() > deadline or (node_limit is not None and nodes >= node_limit):
                timed_out = True
                heapq.heappush(heap, (current_bound, next(counter), lo, hi))
                break
            res = solve_lp_arrays(c, A, senses, b, lo, hi)
            nodes += 1
            lp_iters += res.iterations
            if root_status is None:
                root_status = res.status
                if res.status == UNBOUNDED:
                    return MilpSolution(UNBOUNDED, nodes_explored=1, lp_iterations=lp_iters,
                                        objective=to_sense(-math.inf), bound=to_sense(-math.inf))
            if res.status != OPTIMAL:
                break
            val = res.value
            current_bound = val
            if inc_x is not None and _gap_ok(inc_val, val, gap_tol):
                break
            x = res.x
            if completion is not None:
                xc = completion(x)
                if xc is not None and _acceptable(xc, A, senses, b, arr.lower, arr.upper, int_idx):
                    xc = xc.copy()
                    xc[int_idx] = np.round(xc[int_idx])
                    v = float(c @ xc)
                    if v < inc_val - 1e-12:
                        inc_val, inc_x = v, xc
                        checkpoint(current_bound)
                        if _gap_ok(inc_val, val, gap_tol):
                            break
            frac = x[int_idx] - np.floor(x[int_idx])
            fractional = (frac > INTEGRALITY_TOL) & (frac < 1 - INTEGRALITY_TOL)
            if not fractional.any():
                xr, polish_iters = _polish(c, A, senses, b, lo, hi, x, int_idx)
                lp_iters += polish_iters
                if xr is not None:
                    v = float(c @ xr)
                    if v < inc_val:
                        inc_val, inc_x = v, xr
                        checkpoint(current_bound)
                break
            cand = np.flatnonzero(fractional)
            k = int(int_idx[cand[np.argmin(np.abs(frac[cand] - 0.5))]])
            down_hi = hi.copy()
            down_hi[k] = math.floor(x[k])
            up_lo = lo.copy()
            up_lo[k] = math.ceil(x[k])
            if inc_x is not None:
                go_up = inc_x[k] >= up_lo[k]
            else:
                go_up = x[k] - math.floor(x[k]) >= 0.5
            if go_up:
                heapq.heappush(heap, (val, next(counter), lo, down_hi))
                lo = up_lo
            else:
                heapq.heappush(heap, (val, next(counter), up_lo, hi))
                hi = down_hi
            if nodes % 50 == 0:
                checkpoint(current_bound)
        if timed_out:
            break

    if inc_x is None:
        if timed_out:
            return MilpSolution(TIMEOUT, nodes_explored=nodes, lp_iterations=lp_iters,
                                bound=to_sense(global_bound(math.inf)))
        return MilpSolution(INFEASIBLE, nodes_explored=nodes, lp_iterations=lp_iters)

    bound = global_bound(math.inf) if timed_out else inc_val
    bound = min(bound, inc_val)
    status = OPTIMAL if (not timed_out or _gap_ok(inc_val, bound, gap_tol)) else FEASIBLE
    history.append((nodes, to_sense(inc_val), to_sense(bound)))
    objective = float(arr.c @ inc_x + arr.c0)
    return MilpSolution(
        status=status,
        assignment=dict(zip(arr.names, map(float, inc_x))),
        objective=objective,
        bound=to_sense(bound) + arr.c0,
        nodes_explored=nodes,
        x=inc_x,
        lp_iterations=lp_iters,
        history=[(n_, inc + arr.c0, bd + arr.c0) for n_, inc, bd in history],
    )
