import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from onebp import _kernels
from onebp.data import InteractionDataset
from onebp.sampler import SamplingError, sample_negatives, sample_negatives_batch

from conftest import random_dataset


def one_user(num_items, seen):
    return InteractionDataset.from_pairs([0] * len(seen), seen, 1, num_items)


def test_forced_complement():
    ds = one_user(5, [0, 1, 2, 3])
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert sample_negatives(ds, 0, 1, rng).tolist() == [4]
    assert sample_negatives_batch(ds, np.zeros(3, np.int64), 1, rng).ravel().tolist() == [4, 4, 4]


def test_infeasible():
    ds = one_user(3, [0, 1, 2])
    with pytest.raises(SamplingError):
        sample_negatives(ds, 0, 1, np.random.default_rng(0))
    with pytest.raises(SamplingError):
        sample_negatives(one_user(4, [0, 1]), 0, 3, np.random.default_rng(0))
    with pytest.raises(SamplingError):
        sample_negatives_batch(one_user(4, [0, 1]), np.array([0]), 3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        sample_negatives(one_user(4, [0]), 0, 0, np.random.default_rng(0))


def test_deterministic():
    ds = one_user(100, list(range(0, 100, 3)))
    a = sample_negatives(ds, 0, 7, np.random.default_rng(42))
    b = sample_negatives(ds, 0, 7, np.random.default_rng(42))
    assert a.tolist() == b.tolist()


def _uniformity_check(counts, allowed, total):
    expected = total / allowed.size
    got = counts[allowed]
    assert np.all(np.abs(got - expected) <= 0.2 * expected)
    chi2 = float(((got - expected) ** 2 / expected).sum())
    # chi-square with 989 df: mean 989, sd ~44.5
    assert chi2 < allowed.size + 6 * np.sqrt(2 * allowed.size)


def test_uniform_frequency_scalar():
    seen = list(range(0, 100, 10))
    ds = one_user(1000, seen)
    rng = np.random.default_rng(123)
    counts = np.zeros(1000)
    for _ in range(100_000):
        np.add.at(counts, sample_negatives(ds, 0, 5, rng), 1)
    assert counts[seen].sum() == 0
    # 100k draws of n=5, frequencies pooled over the 5 slots
    _uniformity_check(counts, np.setdiff1d(np.arange(1000), seen), 500_000)


def test_uniform_frequency_batch_and_kernel():
    seen = list(range(0, 100, 10))
    ds = one_user(1000, seen)
    users = np.zeros(100_000, np.int64)
    allowed = np.setdiff1d(np.arange(1000), seen)

    draws = sample_negatives_batch(ds, users, 5, np.random.default_rng(9))
    counts = np.bincount(draws.ravel(), minlength=1000).astype(float)
    assert counts[seen].sum() == 0
    _uniformity_check(counts, allowed, draws.size)

    _kernels.seed(9)
    out = np.empty((users.size, 5), np.int64)
    assert _kernels.draw_negatives(ds.user_ptr, ds.user_items, 1000, users, 5, out) == -1
    counts = np.bincount(out.ravel(), minlength=1000).astype(float)
    assert counts[seen].sum() == 0
    _uniformity_check(counts, allowed, out.size)


def test_per_slot_uniform():
    ds = one_user(50, [0])
    draws = sample_negatives_batch(ds, np.zeros(40_000, np.int64), 3, np.random.default_rng(1))
    for slot in range(3):
        c = np.bincount(draws[:, slot], minlength=50)[1:]
        assert np.all(np.abs(c - c.mean()) <= 0.2 * c.mean())


def _check_rows(ds, users, out, n):
    assert out.shape == (users.size, n)
    for u, row in zip(users.tolist(), out.tolist()):
        assert len(set(row)) == n
        assert not set(row) & set(ds.items_of(u).tolist())
        assert all(0 <= x < ds.num_items for x in row)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**20), st.integers(1, 6), st.floats(0.05, 0.7))
def test_sampler_properties(seed, n, dens):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 8, 20, dens)
    users = rng.integers(0, 8, size=30)
    feasible = (20 - ds.degree()[users]) >= n
    if not feasible.all():
        with pytest.raises(SamplingError):
            sample_negatives_batch(ds, users, n, rng)
        users = users[feasible]
    _check_rows(ds, users, sample_negatives_batch(ds, users, n, rng), n)
    for u in users[:5].tolist():
        _check_rows(ds, np.array([u]), sample_negatives(ds, u, n, rng)[None], n)
    _kernels.seed(seed)
    out = np.empty((users.size, n), np.int64)
    assert _kernels.draw_negatives(ds.user_ptr, ds.user_items, 20, users, n, out) == -1
    _check_rows(ds, users, out, n)


def test_kernel_reports_infeasible_row():
    ds = InteractionDataset.from_pairs([0, 1, 1], [0, 0, 1], 2, 3)
    out = np.empty((3, 2), np.int64)
    assert _kernels.draw_negatives(ds.user_ptr, ds.user_items, 3, np.array([0, 0, 1]), 2, out) == 2
