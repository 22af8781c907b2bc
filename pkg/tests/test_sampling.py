import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cnma.problem import BINARY, CONTINUOUS, INTEGER, VariableSpec
from cnma.sampling import SampleGenerator, sample_uniform

# two-sided KS critical value at alpha = 0.01 for n = 10 000 (asymptotic 1.6276 / sqrt(n))
KS_CRIT_10K = 1.6276 / np.sqrt(10_000)


def test_rastrigin_domain():
    for seed in range(20):
        g = SampleGenerator([VariableSpec("x", CONTINUOUS, -5.12, 5.12)], seed)
        v = sample_uniform(g)
        assert v.shape == (1,) and -5.12 <= v[0] <= 5.12


def test_point_domain():
    g = SampleGenerator([VariableSpec("x", CONTINUOUS, 3, 3), VariableSpec("k", INTEGER, 3, 3)], 0)
    assert np.array_equal(g.sample_batch(5), np.full((5, 2), 3.0))


def test_binary_means():
    g = SampleGenerator([VariableSpec.binary(f"b{i}") for i in range(186)], 11)
    draws = g.sample_batch(10_000)
    assert set(np.unique(draws)) == {0.0, 1.0}
    means = draws.mean(axis=0)
    assert means.min() >= 0.45 and means.max() <= 0.55


def test_seeded_determinism():
    doms = [VariableSpec("a", CONTINUOUS, -1, 2), VariableSpec("k", INTEGER, -3, 4), VariableSpec.binary("b")]
    a, b = SampleGenerator(doms, 5), SampleGenerator(doms, 5)
    assert all(np.array_equal(a.sample_uniform(), b.sample_uniform()) for _ in range(100))
    c = SampleGenerator(doms, 6)
    assert not np.array_equal(SampleGenerator(doms, 5).sample_batch(100), c.sample_batch(100))


def ks_uniform(values, lo, hi):
    u = np.sort((values - lo) / (hi - lo))
    n = len(u)
    i = np.arange(1, n + 1)
    return max(np.max(i / n - u), np.max(u - (i - 1) / n))


def test_ks_continuous():
    g = SampleGenerator([VariableSpec("a", CONTINUOUS, -5.12, 5.12), VariableSpec("b", CONTINUOUS, 10, 11)], 3)
    draws = g.sample_batch(10_000)
    assert ks_uniform(draws[:, 0], -5.12, 5.12) < KS_CRIT_10K
    assert ks_uniform(draws[:, 1], 10, 11) < KS_CRIT_10K


def test_integer_uniform_over_levels():
    g = SampleGenerator([VariableSpec("k", INTEGER, -2, 3)], 9)
    draws = g.sample_batch(10_000)[:, 0]
    levels, counts = np.unique(draws, return_counts=True)
    assert list(levels) == [-2, -1, 0, 1, 2, 3]
    # each level has expected count 10000/6; six-sigma band
    sd = np.sqrt(10_000 * (1 / 6) * (5 / 6))
    assert np.all(np.abs(counts - 10_000 / 6) < 6 * sd)


@given(st.lists(st.tuples(st.sampled_from([CONTINUOUS, INTEGER, BINARY]), st.integers(-50, 50),
                          st.integers(0, 20)), min_size=1, max_size=6),
       st.integers(0, 2**32 - 1))
def test_bounds_invariant(specs, seed):
    doms = []
    for i, (kind, lo, width) in enumerate(specs):
        if kind == BINARY:
            doms.append(VariableSpec.binary(f"v{i}"))
        else:
            doms.append(VariableSpec(f"v{i}", kind, lo, lo + width))
    x = SampleGenerator(doms, seed).sample_batch(20)
    for j, d in enumerate(doms):
        assert np.all(x[:, j] >= d.lower) and np.all(x[:, j] <= d.upper)
        if d.is_discrete:
            assert np.all(x[:, j] == np.round(x[:, j]))


def test_rejects_empty_and_unbounded():
    with pytest.raises(ValueError):
        SampleGenerator([], 0)
    with pytest.raises(ValueError):
        SampleGenerator([VariableSpec("x")], 0)
