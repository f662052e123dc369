import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ccalign.rng import CounterRng

# Frozen outputs pin the generator across versions: any change to the mix
# constants or key derivation silently invalidates every seeded result.
FROZEN_SEED0 = [
    13553398993756449036,
    855445356261032773,
    15178286031640205128,
    8076063230159283867,
]


def test_frozen_reference_stream():
    assert [int(v) for v in CounterRng(0).u64(4)] == FROZEN_SEED0


def test_streams_and_seeds_decorrelate():
    a = CounterRng(0).u64(8)
    assert not np.array_equal(a, CounterRng(1).u64(8))
    assert not np.array_equal(a, CounterRng(0, stream=1).u64(8))


def test_counter_continuation_matches_single_call():
    r = CounterRng(5, stream=3)
    chunks = np.concatenate([r.u64(3), r.u64(1), r.u64(6)])
    assert np.array_equal(chunks, CounterRng(5, stream=3).u64(10))


def test_uniform_is_open_zero_closed_one():
    u = CounterRng(2).uniform(100_000)
    assert u.min() > 0.0
    assert u.max() <= 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_normal_moments():
    z = CounterRng(3).normal(200_000)
    assert abs(z.mean()) < 0.02
    assert abs(z.std() - 1.0) < 0.02
    assert abs((z**3).mean()) < 0.05  # symmetry


def test_normal_odd_count():
    assert CounterRng(4).normal(7).shape == (7,)


@given(seed=st.integers(0, 2**32), n=st.integers(1, 200))
@settings(max_examples=30, deadline=None)
def test_permutation_is_permutation(seed, n):
    p = CounterRng(seed).permutation(n)
    assert np.array_equal(np.sort(p), np.arange(n))


@given(seed=st.integers(0, 2**32), n=st.integers(1, 100), data=st.data())
@settings(max_examples=30, deadline=None)
def test_subset_unique_and_in_range(seed, n, data):
    m = data.draw(st.integers(0, n))
    s = CounterRng(seed).subset(n, m)
    assert s.shape == (m,)
    assert np.unique(s).size == m
    if m:
        assert s.min() >= 0 and s.max() < n


def test_subset_rejects_bad_sizes():
    with pytest.raises(ValueError):
        CounterRng(0).subset(5, 6)


def test_subset_is_roughly_uniform():
    # Element 0 should appear in a 2-of-10 subset with probability 0.2.
    hits = sum(0 in CounterRng(seed).subset(10, 2) for seed in range(4000))
    assert abs(hits / 4000 - 0.2) < 0.03
