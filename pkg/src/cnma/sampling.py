"""Uniform random candidate generation over a mixed box domain."""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from .problem import VariableSpec


class SampleGenerator:
    """Seeded stream of uniform points in the box given by ``domains``.

    Continuous coordinates are uniform on ``[lower, upper]``; integer and
    binary coordinates are uniform over ``{lower, ..., upper}``. A generator
    is stateful and meant for a single owner.
    """

    def __init__(self, domains: Sequence[VariableSpec], rng_seed: int = 0):
        if not domains:
            raise ValueError("at least one domain is required")
        self.domains = tuple(domains)
        self.rng_seed = rng_seed
        self._rng = np.random.default_rng(rng_seed)
        self._lower = np.array([d.lower for d in self.domains], dtype=float)
        self._upper = np.array([d.upper for d in self.domains], dtype=float)
        self._discrete = np.array([d.is_discrete for d in self.domains])
        if not (np.all(np.isfinite(self._lower)) and np.all(np.isfinite(self._upper))):
            raise ValueError("sampling requires finite bounds")

    def sample_uniform(self) -> np.ndarray:
        return self.sample_batch(1)[0]

    def sample_batch(self, n: int) -> np.ndarray:
        u = self._rng.random((n, len(self.domains)))
        x = self._lower + u * (self._upper - self._lower)
        if self._discrete.any():
            lo = self._lower[self._discrete]
            hi = self._upper[self._discrete]
            # floor(lo + u*(hi-lo+1)) is uniform over the integers lo..hi
            k = np.floor(lo + u[:, self._discrete] * (hi - lo + 1.0))
            x[:, self._discrete] = np.minimum(k, hi)
        return np.clip(x, self._lower, self._upper)


def sample_uniform(generator: SampleGenerator) -> np.ndarray:
    return generator.sample_uniform()
