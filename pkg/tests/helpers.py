"""Shared builders for tests."""

import itertools

import numpy as np

from cnma.encoding import nn_to_milp
from cnma.milp import solve_milp
from cnma.problem import (
    CONTINUOUS,
    Blackbox,
    EvalResult,
    LinearExpr,
    Problem,
    Sample,
    VariableSpec,
)
from cnma.surrogate import AffineScaler, ReluNetwork, forward


def box_problem(box, n_out=1, objective=None, sense="maximize", constraints=(), names=None):
    names = names or [f"x{i}" for i in range(len(box))]
    xs = [VariableSpec(n, CONTINUOUS, lo, hi) for n, (lo, hi) in zip(names, box)]
    ys = [VariableSpec(f"y{k}") for k in range(n_out)]
    obj = objective if objective is not None else LinearExpr.var("y0")
    return Problem(xs, ys, obj, Blackbox(lambda v: np.zeros(n_out), len(box), n_out), sense, constraints)


def unit_weight_network(weight=1.0):
    """Two inputs, two hidden ReLUs, one linear output; every weight equal, zero biases."""
    w = np.full((2, 2), weight)
    return ReluNetwork([w, np.full((1, 2), weight)], [np.zeros(2), np.zeros(1)],
                       AffineScaler.identity(2), AffineScaler.identity(1))


def random_network(rng, n_in, hidden, n_out=1, random_scalers=True):
    sizes = [n_in, *hidden, n_out]
    ws = [rng.normal(size=(o, i)) for i, o in itertools.pairwise(sizes)]
    bs = [rng.normal(size=o) * 0.5 for o in sizes[1:]]
    if random_scalers:
        ins = AffineScaler(rng.normal(size=n_in), rng.uniform(0.2, 3, size=n_in))
        outs = AffineScaler(rng.normal(size=n_out) * 5, rng.uniform(0.2, 10, size=n_out))
    else:
        ins, outs = AffineScaler.identity(n_in), AffineScaler.identity(n_out)
    return ReluNetwork(ws, bs, ins, outs)


def encoding_gap(network, box, x0, big_m_mode="interval"):
    """|MILP y - forward(x0)| with x fixed to x0 through its bounds (inf if infeasible)."""
    problem = box_problem(box, network.n_outputs)
    milp = nn_to_milp(network, problem, big_m_mode=big_m_mode)
    fixed = milp.with_fixed({f"x{i}": float(v) for i, v in enumerate(x0)})
    sol = solve_milp(fixed, time_limit=30)
    if not sol.has_solution:
        return np.inf
    y = np.array([sol.assignment[f"y{k}"] for k in range(network.n_outputs)])
    return float(np.max(np.abs(y - forward(network, np.asarray(x0, dtype=float)))))


def samples_from(xs, ys):
    return [Sample(tuple(np.atleast_1d(x).astype(float)), EvalResult.success(np.atleast_1d(y)))
            for x, y in zip(xs, ys)]
