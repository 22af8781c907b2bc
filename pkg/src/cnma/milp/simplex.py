"""Two-phase bounded-variable primal simplex on a dense tableau.

Pricing is Dantzig's largest-reduced-cost rule; after a run of degenerate
pivots the solver switches to Bland's smallest-index rule for both the
entering and the leaving variable, and stays there until a pivot makes
strict progress. That keeps the usual speed while retaining Bland's
termination guarantee.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .model import Milp, MilpArrays

PRIMAL_TOL = 1e-7
PIVOT_TOL = 1e-9
COST_TOL = 1e-9
DEGENERATE_RUN = 30

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass
class LpSolution:
    status: str
    assignment: dict[str, float] = field(default_factory=dict)
    objective: float = math.nan
    x: np.ndarray | None = None
    iterations: int = 0
    diagnostic: str = ""


@dataclass
class _Result:
    status: str
    x: np.ndarray | None
    value: float
    iterations: int
    diagnostic: str = ""


class _Tableau:
    def __init__(self, A, b, upper, cost, basis):
        self.T = A
        self.xB = b
        self.upper = upper
        self.basis = basis
        self.at_upper = np.zeros(A.shape[1], dtype=bool)
        self.is_basic = np.zeros(A.shape[1], dtype=bool)
        self.is_basic[basis] = True
        self.set_cost(cost)
        self.iterations = 0

    def set_cost(self, cost):
        self.cost = cost
        self.d = cost - cost[self.basis] @ self.T

    def run(self, max_iter):
        """Iterate to optimality. Returns "optimal", "unbounded" or "iteration_limit"."""
        code, self.iterations = _pivot_loop(self.T, self.xB, self.upper, self.basis, self.at_upper,
                                            self.is_basic, self.d, self.iterations, max_iter)
        return _RUN_STATUS[code]

    def values(self):
        x = np.where(self.at_upper, self.upper, 0.0)
        x[self.basis] = self.xB
        return x


_RUN_STATUS = {0: OPTIMAL, 1: UNBOUNDED, 2: "iteration_limit"}


@numba.njit(cache=True, nogil=True)
def _pivot_loop(T, xB, upper, basis, at_upper, is_basic, d, iterations, max_iter):
    m, N = T.shape
    degenerate = 0
    bland = False
    ratios = np.empty(m)
    alpha = np.empty(m)
    while True:
        if iterations >= max_iter:
            return 2, iterations
        # pricing: Dantzig, or the smallest improving index under Bland
        j = -1
        best = 0.0
        for k in range(N):
            if is_basic[k] or not upper[k] > 0.0:
                continue
            dk = d[k]
            if (at_upper[k] and dk > COST_TOL) or (not at_upper[k] and dk < -COST_TOL):
                if bland:
                    j = k
                    break
                if abs(dk) > best:
                    best = abs(dk)
                    j = k
        if j < 0:
            return 0, iterations
        direction = -1.0 if at_upper[j] else 1.0
        t = np.inf
        for i in range(m):
            a = T[i, j] * direction
            alpha[i] = a
            r_ = np.inf
            if a > PIVOT_TOL:
                r_ = max(xB[i], 0.0) / a
            elif a < -PIVOT_TOL:
                ub = upper[basis[i]]
                if np.isfinite(ub):
                    r_ = max(ub - xB[i], 0.0) / -a
            ratios[i] = r_
            t = min(t, r_)
        r = -1
        if np.isfinite(t):
            for i in range(m):
                if ratios[i] <= t + 1e-12:
                    if r < 0:
                        r = i
                    elif bland:
                        if basis[i] < basis[r]:
                            r = i
                    elif abs(alpha[i]) > abs(alpha[r]):
                        r = i
        t_flip = upper[j]
        iterations += 1
        if t_flip <= t:
            if not np.isfinite(t_flip):
                return 1, iterations
            for i in range(m):
                xB[i] -= t_flip * alpha[i]
            at_upper[j] = not at_upper[j]
            step = t_flip
        else:
            step = t
            leaving = basis[r]
            for i in range(m):
                xB[i] -= t * alpha[i]
            entering_value = (upper[j] if at_upper[j] else 0.0) + direction * t
            at_upper[leaving] = alpha[r] < 0
            at_upper[j] = False
            is_basic[leaving] = False
            is_basic[j] = True
            basis[r] = j
            xB[r] = entering_value
            piv = T[r, j]
            for k in range(N):
                T[r, k] /= piv
            for i in range(m):
                f = T[i, j]
                if i != r and f != 0.0:
                    for k in range(N):
                        T[i, k] -= f * T[r, k]
            for i in range(m):
                T[i, j] = 0.0
            T[r, j] = 1.0
            dj = d[j]
            if dj != 0.0:
                for k in range(N):
                    d[k] -= dj * T[r, k]
            d[j] = 0.0
        if step <= 1e-12:
            degenerate += 1
            if degenerate >= DEGENERATE_RUN:
                bland = True
        else:
            degenerate = 0
            bland = False


def _transform(lower, upper):
    """Map each variable onto a non-negative one: ``x = offset + sign * x'``.

    Free variables are split into two non-negative parts.
    """
    offset, cols, signs, ub = [], [], [], []
    for i, (lo, hi) in enumerate(zip(lower, upper)):
        if math.isfinite(lo):
            offset.append(lo)
            cols.append(i), signs.append(1.0), ub.append(hi - lo)
        elif math.isfinite(hi):
            offset.append(hi)
            cols.append(i), signs.append(-1.0), ub.append(math.inf)
        else:
            offset.append(0.0)
            cols.append(i), signs.append(1.0), ub.append(math.inf)
            cols.append(i), signs.append(-1.0), ub.append(math.inf)
    return np.array(offset), np.array(cols), np.array(signs), np.array(ub)


def _solve_once(c, A, senses, b, lower, upper, max_iter):
    m = len(b)
    if np.any(lower > upper + PRIMAL_TOL):
        return _Result(INFEASIBLE, None, math.nan, 0, "inverted bounds")
    upper = np.maximum(upper, lower)
    offset, cols, signs, ub = _transform(lower, upper)
    Ap = A[:, cols] * signs
    cp = c[cols] * signs
    rhs = b - A @ offset

    slack_sign = np.array([1.0 if s == "<=" else -1.0 if s == ">=" else 0.0 for s in senses])
    flip = rhs < 0
    row_sign = np.where(flip, -1.0, 1.0)
    rhs = rhs * row_sign
    eff_slack = slack_sign * row_sign
    has_slack = slack_sign != 0
    slack_rows = np.flatnonzero(has_slack)
    art_rows = np.flatnonzero(~(eff_slack > 0))
    n_struct, n_slack, n_art = Ap.shape[1], len(slack_rows), len(art_rows)
    N = n_struct + n_slack + n_art
    T = np.zeros((m, N))
    T[:, :n_struct] = Ap * row_sign[:, None]
    T[slack_rows, n_struct + np.arange(n_slack)] = eff_slack[slack_rows]
    T[art_rows, n_struct + n_slack + np.arange(n_art)] = 1.0
    upper_full = np.concatenate([ub, np.full(n_slack + n_art, np.inf)])
    basis = np.empty(m, dtype=int)
    slack_col = {r: n_struct + k for k, r in enumerate(slack_rows)}
    art_col = {r: n_struct + n_slack + k for k, r in enumerate(art_rows)}
    for r in range(m):
        basis[r] = art_col[r] if r in art_col else slack_col[r]

    iterations = 0
    tab = _Tableau(T, rhs.astype(float), upper_full, np.zeros(N), basis)
    if n_art:
        cost1 = np.zeros(N)
        cost1[n_struct + n_slack:] = 1.0
        tab.set_cost(cost1)
        status = tab.run(max_iter)
        iterations = tab.iterations
        if status == "iteration_limit":
            return _Result(INFEASIBLE, None, math.nan, iterations, "iteration limit in phase 1")
        infeas = float(tab.values()[n_struct + n_slack:].sum())
        if infeas > PRIMAL_TOL * max(1.0, float(np.abs(rhs).max(initial=0.0))):
            return _Result(INFEASIBLE, None, math.nan, iterations)
        # artificials may stay basic at zero but can never move again
        tab.upper[n_struct + n_slack:] = 0.0
    cost2 = np.zeros(N)
    cost2[:n_struct] = cp
    tab.set_cost(cost2)
    status = tab.run(max_iter)
    iterations = tab.iterations
    if status == UNBOUNDED:
        return _Result(UNBOUNDED, None, -math.inf, iterations)
    if status == "iteration_limit":
        return _Result(INFEASIBLE, None, math.nan, iterations, "iteration limit in phase 2")

    xfull = tab.values()
    # recompute basic values from the original columns to shed pivot drift
    full = np.zeros((m, N))
    full[:, :n_struct] = Ap * row_sign[:, None]
    full[slack_rows, n_struct + np.arange(n_slack)] = eff_slack[slack_rows]
    full[art_rows, n_struct + n_slack + np.arange(n_art)] = 1.0
    nonbasic = np.ones(N, dtype=bool)
    nonbasic[tab.basis] = False
    try:
        if m == 0:
            raise np.linalg.LinAlgError
        refined = np.linalg.solve(full[:, tab.basis], rhs - full[:, nonbasic] @ xfull[nonbasic])
        ub_b = upper_full[tab.basis]
        lo_ok = refined >= -PRIMAL_TOL
        hi_ok = refined <= np.where(np.isfinite(ub_b), ub_b, np.inf) + PRIMAL_TOL
        if np.all(lo_ok & hi_ok) and np.all(np.isfinite(refined)):
            xfull[tab.basis] = np.clip(refined, 0.0, ub_b)
    except np.linalg.LinAlgError:
        pass
    xp = xfull[:n_struct]
    x = offset.copy()
    np.add.at(x, cols, signs * xp)
    return _Result(OPTIMAL, x, float(c @ x), iterations)


def _violation(A, senses, b, lower, upper, x):
    ax = A @ x
    worst = 0.0
    if len(b):
        scale = 1.0 + np.abs(b)
        for s, val, rhs, sc in zip(senses, ax, b, scale):
            if s == "<=":
                v = val - rhs
            elif s == ">=":
                v = rhs - val
            else:
                v = abs(val - rhs)
            worst = max(worst, v / sc)
    worst = max(worst, float(np.max(lower - x, initial=0.0)), float(np.max(x - upper, initial=0.0)))
    return worst


def solve_lp_arrays(c, A, senses, b, lower, upper, max_iter: int | None = None) -> _Result:
    """Minimize ``c @ x`` subject to the rows and bounds."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(len(b), len(c))
    b = np.asarray(b, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if max_iter is None:
        max_iter = 50 * (A.shape[0] + A.shape[1]) + 1000
    res = _solve_once(c, A, senses, b, lower, upper, max_iter)
    if res.status == OPTIMAL and _violation(A, senses, b, lower, upper, res.x) <= 1e-6:
        return res
    if res.status in (UNBOUNDED,) or (res.status == INFEASIBLE and not res.diagnostic):
        return res
    # numerical trouble: retry once on slightly perturbed bounds
    rng = np.random.default_rng(len(b) * 7919 + len(c))
    eps = 1e-9 * (1.0 + np.abs(b))
    b2 = b + np.where(np.array([s == "==" for s in senses], dtype=bool), 0.0, rng.uniform(0, 1, len(b)) * eps)
    retry = _solve_once(c, A, senses, b2, lower, upper, max_iter)
    if retry.status == OPTIMAL and _violation(A, senses, b, lower, upper, retry.x) <= 1e-6:
        retry.diagnostic = "re-solved with perturbed bounds"
        return retry
    return _Result(INFEASIBLE, None, math.nan, res.iterations + retry.iterations,
                   "numerical instability: " + (res.diagnostic or "solution failed verification"))


def solve_lp(milp: Milp | MilpArrays) -> LpSolution:
    """Solve the continuous relaxation of ``milp`` (integrality is ignored)."""
    arr = milp.to_arrays() if isinstance(milp, Milp) else milp
    sign = -1.0 if arr.maximize else 1.0
    res = solve_lp_arrays(sign * arr.c, arr.A, arr.senses, arr.b, arr.lower, arr.upper)
    if res.status != OPTIMAL:
        obj = (math.inf if arr.maximize else -math.inf) if res.status == UNBOUNDED else math.nan
        return LpSolution(res.status, {}, obj, None, res.iterations, res.diagnostic)
    x = res.x
    return LpSolution(OPTIMAL, dict(zip(arr.names, map(float, x))), float(arr.c @ x + arr.c0), x,
                      res.iterations, res.diagnostic)
