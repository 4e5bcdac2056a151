"""Uniform random negative sampling against a user's train adjacency."""
from __future__ import annotations

import numpy as np

from .data import InteractionDataset


class SamplingError(ValueError):
    pass


def sample_negatives(
    train: InteractionDataset, user: int, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw ``n`` distinct items the user has not interacted with in ``train``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    seen = train.items_of(user)
    pool = train.num_items - seen.size
    if pool <= 0:
        raise SamplingError(f"user {user} has interacted with every item")
    if n > pool:
        raise SamplingError(f"user {user} has only {pool} uninteracted items, asked for {n}")

    if pool < 2 * n:
        complement = np.setdiff1d(np.arange(train.num_items), seen, assume_unique=True)
        return rng.permutation(complement)[:n]

    out: list[int] = []
    taken: set[int] = set()
    while len(out) < n:
        for item in rng.integers(0, train.num_items, size=n - len(out)).tolist():
            if item in taken:
                continue
            k = np.searchsorted(seen, item)
            if k < seen.size and seen[k] == item:
                continue
            taken.add(item)
            out.append(item)
            if len(out) == n:
                break
    return np.asarray(out, dtype=np.int64)


def sample_negatives_batch(
    train: InteractionDataset, users: np.ndarray, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized :func:`sample_negatives` for a whole batch of users.

    Each row draws a run of uniform candidates and keeps the first ``n`` that
    are neither train items of the user nor repeats within the row, i.e.
    sequential rejection sampling done in bulk. Rows whose run came up short
    are redrawn. Users whose uninteracted pool is smaller than ``2 * n`` go
    through the per-user complement path.
    """
    users = np.asarray(users, dtype=np.int64)
    if n < 1:
        raise ValueError("n must be >= 1")
    pool = train.num_items - train.degree()[users]
    if (pool < n).any():
        bad = int(users[np.argmax(pool < n)])
        raise SamplingError(f"user {bad} has fewer than {n} uninteracted items")

    out = np.empty((users.size, n), dtype=np.int64)
    small = pool < 2 * n
    for row in np.flatnonzero(small):
        out[row] = sample_negatives(train, int(users[row]), n, rng)

    width = 2 * n + 4
    todo = np.flatnonzero(~small)
    while todo.size:
        draw = rng.integers(0, train.num_items, size=(todo.size, width))
        ok = ~train.contains(np.repeat(users[todo], width), draw.ravel()).reshape(draw.shape)
        # drop repeats of an earlier column in the same row
        order = np.argsort(draw, axis=1, kind="stable")
        sd = np.take_along_axis(draw, order, axis=1)
        dup = np.zeros_like(ok)
        np.put_along_axis(dup, order[:, 1:], sd[:, 1:] == sd[:, :-1], axis=1)
        ok &= ~dup
        rank = np.cumsum(ok, axis=1)
        done = rank[:, -1] >= n
        keep = ok & (rank <= n) & done[:, None]
        out[todo[done]] = draw[keep].reshape(-1, n)
        todo = todo[~done]
    return out
