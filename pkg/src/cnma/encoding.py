"""Big-M encoding of a trained ReLU network as MILP rows.

For a hidden neuron with pre-activation ``p`` and output ``h`` the encoding is

    h >= 0,  h >= p,  h <= p + M_neg * d,  h <= M_pos * (1 - d)

with ``d`` binary: ``d = 0`` selects the active branch (``h = p >= 0``) and
``d = 1`` the inactive one (``h = 0 >= p``). ``M_neg`` must cover ``-p`` and
``M_pos`` must cover ``p`` over the input box; both come from interval
propagation unless a fixed constant is requested.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from .milp.model import Milp, MilpVar
from .problem import BINARY, CONTINUOUS, Constraint, LinearExpr, Problem
from .surrogate import ReluNetwork

DEFAULT_FIXED_M = 1e5
_PAD = 1e-6


class BigMTooSmallError(ValueError):
    pass


class UnboundedInputError(ValueError):
    pass


@dataclass(frozen=True)
class NeuronBounds:
    """Pre-activation intervals for one layer (normalized network units)."""

    lo: np.ndarray
    hi: np.ndarray

    @property
    def post_lo(self) -> np.ndarray:
        return np.maximum(self.lo, 0.0)

    @property
    def post_hi(self) -> np.ndarray:
        return np.maximum(self.hi, 0.0)


def _affine_interval(w, b, lo, hi):
    wp = np.maximum(w, 0.0)
    wn = np.minimum(w, 0.0)
    return wp @ lo + wn @ hi + b, wp @ hi + wn @ lo + b


def compute_bounds(network: ReluNetwork, input_box: Sequence[tuple[float, float]]) -> list[NeuronBounds]:
    """Interval propagation through every layer, the linear output layer included.

    ``input_box`` is in raw problem units; the input scaler is applied first.
    """
    box = np.asarray(input_box, dtype=float).reshape(-1, 2)
    if box.shape[0] != network.n_inputs:
        raise ValueError(f"box has {box.shape[0]} coordinates, network takes {network.n_inputs}")
    lo = network.input_scaler.normalize(box[:, 0])
    hi = network.input_scaler.normalize(box[:, 1])
    out = []
    last = len(network.weights) - 1
    for k, (w, b) in enumerate(zip(network.weights, network.biases)):
        plo, phi = _affine_interval(w, b, lo, hi)
        out.append(NeuronBounds(plo, phi))
        if k < last:
            lo, hi = np.maximum(plo, 0.0), np.maximum(phi, 0.0)
    return out


def relu_to_milp(pre_expr: LinearExpr, out_var: MilpVar | str, indicator: MilpVar | str,
                 M: float | tuple[float, float], bounds: tuple[float, float] | None = None) -> list[Constraint]:
    """The four big-M rows tying ``out = max(pre, 0)``.

    ``M`` is one constant or a ``(M_neg, M_pos)`` pair for the two big-M rows.
    When the pre-activation ``bounds`` are supplied the constants are checked
    against them.
    """
    m_neg, m_pos = (M, M) if np.isscalar(M) else M
    if bounds is not None:
        lo, hi = bounds
        if m_neg < -lo - 1e-9 or m_pos < hi - 1e-9:
            raise BigMTooSmallError(
                f"big-M ({m_neg}, {m_pos}) does not cover pre-activation range [{lo}, {hi}]")
    if isinstance(indicator, MilpVar) and indicator.kind != BINARY:
        raise ValueError("indicator must be binary")
    h = LinearExpr.var(out_var.name if isinstance(out_var, MilpVar) else out_var)
    d = LinearExpr.var(indicator.name if isinstance(indicator, MilpVar) else indicator)
    return [
        h >= 0.0,
        h >= pre_expr,
        h <= pre_expr + m_neg * d,
        h <= m_pos * (1.0 - d),
    ]


class ForwardCompletion:
    """Complete an LP point into a full MILP assignment via the forward pass.

    The x coordinates are kept (integer ones rounded) and every neuron,
    indicator and output is recomputed exactly from the network.
    """

    def __init__(self, network: ReluNetwork, names: Sequence[str], x_names: Sequence[str],
                 y_names: Sequence[str], prefix: str, integer_x: Sequence[bool]):
        pos = {n: i for i, n in enumerate(names)}
        self.network = network
        self.n = len(names)
        self.x_idx = np.array([pos[n] for n in x_names], dtype=int)
        self.y_idx = np.array([pos[n] for n in y_names], dtype=int)
        self.integer_x = np.asarray(integer_x, dtype=bool)
        self.h_idx, self.d_idx = [], []
        for layer, w in enumerate(network.weights[:-1]):
            self.h_idx.append(np.array([pos[f"{prefix}h{layer}_{i}"] for i in range(w.shape[0])], dtype=int))
            self.d_idx.append(np.array([pos[f"{prefix}d{layer}_{i}"] for i in range(w.shape[0])], dtype=int))

    def __call__(self, point: np.ndarray) -> np.ndarray:
        out = np.array(point, dtype=float, copy=True)
        x = out[self.x_idx]
        x = np.where(self.integer_x, np.round(x), x)
        out[self.x_idx] = x
        net = self.network
        a = net.input_scaler.normalize(x)
        for k, (w, b) in enumerate(zip(net.weights[:-1], net.biases[:-1])):
            pre = w @ a + b
            a = np.maximum(pre, 0.0)
            out[self.h_idx[k]] = a
            out[self.d_idx[k]] = (pre <= 0.0).astype(float)
        out[self.y_idx] = net.output_scaler.denormalize(net.weights[-1] @ a + net.biases[-1])
        return out


def _prefix_for(problem: Problem) -> str:
    names = [*problem.x_names, *problem.y_names]
    prefix = "nn_"
    while any(n.startswith(prefix) for n in names):
        prefix = "_" + prefix
    return prefix


def _pad(v: float) -> float:
    return v + _PAD * (1.0 + abs(v))


def nn_to_milp(network: ReluNetwork, problem: Problem, big_m_mode: str = "interval",
               fixed_m: float = DEFAULT_FIXED_M, extra_constraints: Iterable[Constraint] = ()) -> Milp:
    """Encode ``F_nn(x) = y`` together with P and the objective as one MILP.

    The input scaler is folded into the first layer's pre-activation
    expressions (an exact affine substitution); the output scaler appears in
    the equality rows defining each y variable.
    """
    if network.n_inputs != len(problem.x_vars) or network.n_outputs != len(problem.y_vars):
        raise ValueError(
            f"arity mismatch: network is {network.n_inputs}->{network.n_outputs}, "
            f"problem is {len(problem.x_vars)}->{len(problem.y_vars)}")
    if big_m_mode not in ("interval", "fixed"):
        raise ValueError(f"unknown big_m_mode {big_m_mode!r}")
    for v in problem.x_vars:
        if not (math.isfinite(v.lower) and math.isfinite(v.upper)):
            raise UnboundedInputError(f"x variable {v.name} has infinite bounds")

    prefix = _prefix_for(problem)
    milp = Milp(sense=problem.sense)
    for v in problem.x_vars:
        milp.add_var(v.name, v.kind, float(v.lower), float(v.upper))

    box = [(v.lower, v.upper) for v in problem.x_vars]
    bounds = compute_bounds(network, box)
    interval = big_m_mode == "interval"

    sc = network.input_scaler
    acts = [LinearExpr({v.name: 1.0 / s}, -m / s) for v, m, s in zip(problem.x_vars, sc.shift, sc.scale)]
    n_hidden = len(network.weights) - 1
    for layer in range(n_hidden):
        w, b = network.weights[layer], network.biases[layer]
        nb = bounds[layer]
        new_acts = []
        for i in range(w.shape[0]):
            pre = LinearExpr({}, float(b[i]))
            for j, a in enumerate(acts):
                if w[i, j] != 0.0:
                    pre = pre + float(w[i, j]) * a
            lo, hi = float(nb.lo[i]), float(nb.hi[i])
            d_lo, d_hi = 0.0, 1.0
            if interval and math.isfinite(lo) and math.isfinite(hi):
                m_neg, m_pos = _pad(max(-lo, 0.0)), _pad(max(hi, 0.0))
                if hi <= 0.0:
                    d_lo = 1.0  # always inactive
                elif lo >= 0.0:
                    d_hi = 0.0  # always active
                h_upper = m_pos
            else:
                m_neg = m_pos = fixed_m
                h_upper = fixed_m
            h = milp.add_var(f"{prefix}h{layer}_{i}", CONTINUOUS, 0.0, h_upper)
            milp.add_var(f"{prefix}d{layer}_{i}", BINARY, d_lo, d_hi)
            for row in relu_to_milp(pre, f"{prefix}h{layer}_{i}", f"{prefix}d{layer}_{i}", (m_neg, m_pos)):
                if row.lhs.variables() == {f"{prefix}h{layer}_{i}"} and row.sense == ">=" and not row.rhs.variables():
                    continue  # h >= 0 is already the variable's lower bound
                milp.add_constraint(row)
            new_acts.append(h)
        acts = new_acts

    w, b = network.weights[-1], network.biases[-1]
    osc = network.output_scaler
    out_bounds = bounds[-1]
    if not interval:
        # bound y through the [0, M] hidden boxes instead of the tight intervals
        prev = np.full(w.shape[1], fixed_m)
        olo, ohi = _affine_interval(w, b, np.zeros(w.shape[1]), prev) if n_hidden else (out_bounds.lo, out_bounds.hi)
    else:
        olo, ohi = out_bounds.lo, out_bounds.hi
    for k, v in enumerate(problem.y_vars):
        ylo = float(olo[k] * osc.scale[k] + osc.shift[k])
        yhi = float(ohi[k] * osc.scale[k] + osc.shift[k])
        ylo, yhi = -_pad(-ylo), _pad(yhi)
        milp.add_var(v.name, CONTINUOUS, ylo, yhi)
        expr = LinearExpr({v.name: 1.0})
        for j, a in enumerate(acts):
            if w[k, j] != 0.0:
                expr = expr - float(osc.scale[k] * w[k, j]) * a
        milp.add_constraint(expr.equals(float(osc.shift[k] + osc.scale[k] * b[k])))
        if math.isfinite(v.lower):
            milp.add_constraint(LinearExpr.var(v.name) >= v.lower)
        if math.isfinite(v.upper):
            milp.add_constraint(LinearExpr.var(v.name) <= v.upper)

    for c in problem.constraints:
        milp.add_constraint(c)
    for c in extra_constraints:
        milp.add_constraint(c)
    milp.objective = problem.objective
    milp.handles = {n: n for n in (*problem.x_names, *problem.y_names)}
    milp.info["neuron_bounds"] = bounds
    milp.info["completion"] = ForwardCompletion(
        network, milp.names, problem.x_names, problem.y_names, prefix,
        [v.is_discrete for v in problem.x_vars])
    milp.info["prefix"] = prefix
    return milp
