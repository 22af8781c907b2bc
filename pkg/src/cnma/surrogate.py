"""Fully-connected ReLU regression networks used as blackbox surrogates.

Networks carry affine input/output scalers so that callers always work in raw
problem units; the MILP encoding composes those scalers exactly.
"""

from __future__ import annotations

import itertools
import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .problem import Sample


class TooFewSamplesError(ValueError):
    pass


@dataclass(frozen=True)
class Architecture:
    hidden_layers: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        if not 1 <= len(self.hidden_layers) <= 4:
            raise ValueError("an architecture has between 1 and 4 hidden layers")
        if any(h < 1 for h in self.hidden_layers):
            raise ValueError("hidden layer widths must be positive")

    def __str__(self):
        return "[" + ",".join(map(str, self.hidden_layers)) + "]"


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2000
    learning_rate: float = 1e-2
    batch_size: int | None = None  # None -> min(32, n_samples)
    weight_init_seed: int = 0
    l2_penalty: float = 1e-5
    lr_schedule: str = "cosine"  # or "constant"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")


@dataclass(frozen=True)
class AffineScaler:
    """``normalize(v) = (v - shift) / scale`` per coordinate."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shift", np.asarray(self.shift, dtype=float))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))
        if np.any(self.scale <= 0):
            raise ValueError("scaler scales must be strictly positive")

    @classmethod
    def identity(cls, n: int) -> AffineScaler:
        return cls(np.zeros(n), np.ones(n))

    @classmethod
    def fit(cls, data: np.ndarray) -> AffineScaler:
        data = np.asarray(data, dtype=float)
        shift = data.mean(axis=0)
        scale = data.std(axis=0)
        scale = np.where(scale > 1e-12 * np.maximum(1.0, np.abs(shift)), scale, 1.0)
        return cls(shift, scale)

    def normalize(self, v):
        return (np.asarray(v, dtype=float) - self.shift) / self.scale

    def denormalize(self, v):
        return np.asarray(v, dtype=float) * self.scale + self.shift


@dataclass(frozen=True, eq=False)
class ReluNetwork:
    """Weights are stored ``(n_out, n_in)`` so a layer computes ``W @ a + b``.

    ReLU follows every layer except the last, which is linear.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    input_scaler: AffineScaler
    output_scaler: AffineScaler
    train_mse: float = float("nan")
    initial_mse: float = float("nan")

    def __post_init__(self):
        ws = tuple(np.array(w, dtype=float, ndmin=2) for w in self.weights)
        bs = tuple(np.array(b, dtype=float, ndmin=1) for b in self.biases)
        if len(ws) != len(bs) or len(ws) < 1:
            raise ValueError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(ws, bs)):
            if w.shape[0] != b.shape[0]:
                raise ValueError(f"layer {k}: {w.shape[0]} rows but {b.shape[0]} biases")
            if k and w.shape[1] != ws[k - 1].shape[0]:
                raise ValueError(f"layer {k}: expects {w.shape[1]} inputs, previous layer has {ws[k - 1].shape[0]}")
        if self.input_scaler.shift.shape != (ws[0].shape[1],):
            raise ValueError("input scaler arity does not match the first layer")
        if self.output_scaler.shift.shape != (ws[-1].shape[0],):
            raise ValueError("output scaler arity does not match the last layer")
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def n_inputs(self) -> int:
        return self.weights[0].shape[1]

    @property
    def n_outputs(self) -> int:
        return self.weights[-1].shape[0]

    @property
    def architecture(self) -> Architecture:
        return Architecture(tuple(w.shape[0] for w in self.weights[:-1]))

    def hidden_activations(self, x) -> list[np.ndarray]:
        """Post-ReLU values of each hidden layer for a single input."""
        a = self.input_scaler.normalize(np.asarray(x, dtype=float))
        out = []
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(w @ a + b, 0.0)
            out.append(a)
        return out

    def to_dict(self) -> dict:
        return {
            "architecture": list(self.architecture.hidden_layers),
            "layers": [{"weights": w.tolist(), "biases": b.tolist()}
                       for w, b in zip(self.weights, self.biases)],
            "input_scaler": {"shift": self.input_scaler.shift.tolist(),
                             "scale": self.input_scaler.scale.tolist()},
            "output_scaler": {"shift": self.output_scaler.shift.tolist(),
                              "scale": self.output_scaler.scale.tolist()},
            "train_mse": self.train_mse,
            "initial_mse": self.initial_mse,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> ReluNetwork:
        return cls(
            weights=[np.array(layer["weights"]) for layer in d["layers"]],
            biases=[np.array(layer["biases"]) for layer in d["layers"]],
            input_scaler=AffineScaler(d["input_scaler"]["shift"], d["input_scaler"]["scale"]),
            output_scaler=AffineScaler(d["output_scaler"]["shift"], d["output_scaler"]["scale"]),
            train_mse=d.get("train_mse", float("nan")),
            initial_mse=d.get("initial_mse", float("nan")),
        )

    @classmethod
    def from_json(cls, text: str) -> ReluNetwork:
        return cls.from_dict(json.loads(text))


def forward(network: ReluNetwork, x) -> np.ndarray:
    """Evaluate the network in raw units. Accepts one point or a batch (rows)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    a = np.atleast_2d(x)
    if a.shape[1] != network.n_inputs:
        raise ValueError(f"arity mismatch: network takes {network.n_inputs} inputs, got {a.shape[1]}")
    a = network.input_scaler.normalize(a)
    a = _raw_forward(network.weights, network.biases, a)
    y = network.output_scaler.denormalize(a)
    return y[0] if single else y


def _raw_forward(weights, biases, a):
    last = len(weights) - 1
    for k, (w, b) in enumerate(zip(weights, biases)):
        a = a @ w.T + b
        if k < last:
            a = np.maximum(a, 0.0)
    return a


def _ok_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    ok = [s for s in samples if s.ok]
    if len(ok) < 2:
        raise TooFewSamplesError(f"need at least 2 successful samples, got {len(ok)}")
    x = np.array([s.x for s in ok], dtype=float)
    y = np.array([s.y for s in ok], dtype=float)
    return x, y


def fit_scalers(samples: Sequence[Sample]) -> tuple[AffineScaler, AffineScaler]:
    x, y = _ok_arrays(samples)
    return AffineScaler.fit(x), AffineScaler.fit(y)


def init_weights(sizes: Sequence[int], rng: np.random.Generator) -> tuple[list, list]:
    weights, biases = [], []
    for fan_in, fan_out in itertools.pairwise(sizes):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train(samples: Sequence[Sample], architecture: Architecture | Sequence[int],
          config: TrainConfig | None = None) -> ReluNetwork:
    """Fit a ReLU network by mini-batch Adam on normalized data.

    Failed samples are dropped. The returned weights are the snapshot with
    the lowest full-training-set MSE seen, the initial weights included.
    """
    config = config or TrainConfig()
    if not isinstance(architecture, Architecture):
        architecture = Architecture(tuple(architecture))
    x_raw, y_raw = _ok_arrays(samples)
    in_scaler, out_scaler = AffineScaler.fit(x_raw), AffineScaler.fit(y_raw)
    X = in_scaler.normalize(x_raw)
    Y = out_scaler.normalize(y_raw)
    n = X.shape[0]
    batch = min(config.batch_size or 32, n)

    rng = np.random.default_rng(config.weight_init_seed)
    sizes = [X.shape[1], *architecture.hidden_layers, Y.shape[1]]
    W, B = init_weights(sizes, rng)
    mW = [np.zeros_like(w) for w in W]
    vW = [np.zeros_like(w) for w in W]
    mB = [np.zeros_like(b) for b in B]
    vB = [np.zeros_like(b) for b in B]
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    l2 = config.l2_penalty
    if config.lr_schedule == "cosine":
        # anneal to 1% of the base rate so the last epochs settle
        phase = np.arange(config.epochs) / max(config.epochs - 1, 1)
        rates = config.learning_rate * (0.01 + 0.99 * 0.5 * (1.0 + np.cos(np.pi * phase)))
    else:
        rates = np.full(config.epochs, config.learning_rate)
    n_layers = len(W)

    def full_mse():
        return float(np.mean((_raw_forward(W, B, X) - Y) ** 2))

    initial = full_mse()
    best = initial
    best_W = [w.copy() for w in W]
    best_B = [b.copy() for b in B]
    t = 0
    for epoch in range(config.epochs):
        lr = rates[epoch]
        order = rng.permutation(n) if batch < n else None
        for start in range(0, n, batch):
            if order is None:
                xb, yb = X, Y
            else:
                idx = order[start:start + batch]
                xb, yb = X[idx], Y[idx]
            acts = [xb]
            a = xb
            for k in range(n_layers):
                a = a @ W[k].T + B[k]
                if k < n_layers - 1:
                    a = np.maximum(a, 0.0)
                acts.append(a)
            err = acts[-1] - yb
            if order is None:
                loss = float(np.mean(err ** 2))
                if loss < best:
                    best = loss
                    best_W = [w.copy() for w in W]
                    best_B = [b.copy() for b in B]
            grad = err * (2.0 / err.size)
            t += 1
            corr1 = 1.0 - beta1 ** t
            corr2 = 1.0 - beta2 ** t
            for k in range(n_layers - 1, -1, -1):
                gW = grad.T @ acts[k] + l2 * W[k]
                gB = grad.sum(axis=0)
                if k:
                    grad = (grad @ W[k]) * (acts[k] > 0)
                mW[k] = beta1 * mW[k] + (1 - beta1) * gW
                vW[k] = beta2 * vW[k] + (1 - beta2) * gW * gW
                mB[k] = beta1 * mB[k] + (1 - beta1) * gB
                vB[k] = beta2 * vB[k] + (1 - beta2) * gB * gB
                W[k] -= lr * (mW[k] / corr1) / (np.sqrt(vW[k] / corr2) + eps)
                B[k] -= lr * (mB[k] / corr1) / (np.sqrt(vB[k] / corr2) + eps)
        if order is not None:
            loss = full_mse()
            if loss < best:
                best = loss
                best_W = [w.copy() for w in W]
                best_B = [b.copy() for b in B]
    final = full_mse()
    if final < best:
        best, best_W, best_B = final, W, B
    return ReluNetwork(best_W, best_B, in_scaler, out_scaler, train_mse=best, initial_mse=initial)
