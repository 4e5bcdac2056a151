"""Compiled inner loops for negative sampling and mini-batch updates.

Tables are float32; every dot product, gradient and aggregation is carried
out in float64 and rounded once when written back.
"""
from __future__ import annotations

import numpy as np
from numba import njit

TWOBP, ONEBP, USERONLYBP = 0, 1, 2

OK = 0
NOT_ENOUGH_ITEMS = 1
NON_FINITE = 2


@njit(cache=True)
def seed(value):
    np.random.seed(value)


@njit(cache=True)
def _contains(sorted_items, lo, hi, item):
    while lo < hi:
        mid = (lo + hi) >> 1
        v = sorted_items[mid]
        if v == item:
            return True
        if v < item:
            lo = mid + 1
        else:
            hi = mid
    return False


@njit(cache=True)
def draw_negatives(ptr, adj, num_items, users, n, out):
    """Fill ``out[b]`` with ``n`` distinct items outside ``users[b]``'s adjacency.

    Returns the offending row on failure, else -1.
    """
    scratch = np.empty(num_items, dtype=np.int64)
    for b in range(users.shape[0]):
        u = users[b]
        lo, hi = ptr[u], ptr[u + 1]
        pool = num_items - (hi - lo)
        if pool < n:
            return b
        if pool < 2 * n:
            # enumerate the complement, then a partial Fisher-Yates shuffle
            m = 0
            j = lo
            for item in range(num_items):
                if j < hi and adj[j] == item:
                    j += 1
                else:
                    scratch[m] = item
                    m += 1
            for c in range(n):
                r = c + np.random.randint(0, m - c)
                tmp = scratch[c]
                scratch[c] = scratch[r]
                scratch[r] = tmp
                out[b, c] = scratch[c]
            continue
        count = 0
        while count < n:
            cand = np.random.randint(0, num_items)
            if _contains(adj, lo, hi, cand):
                continue
            dup = False
            for c in range(count):
                if out[b, c] == cand:
                    dup = True
                    break
            if dup:
                continue
            out[b, count] = cand
            count += 1
    return -1


@njit(cache=True)
def batch_update(U, V, users, pos, negs, lr, beta, strategy, gu, gv, umark, vmark,
                 touched_u, touched_v, losses):
    """One mini-batch step. ``gu``/``gv`` and the mark arrays must come in zeroed
    and are returned zeroed. Returns a status code."""
    B = users.shape[0]
    S = negs.shape[1]
    d = U.shape[1]
    s = np.empty(S + 1)
    coef = np.empty(S + 1)
    n_tu = 0
    n_tv = 0

    # gradients against the pre-batch tables
    for b in range(B):
        u = users[b]
        for j in range(S + 1):
            it = pos[b] if j == 0 else negs[b, j - 1]
            acc = 0.0
            for t in range(d):
                acc += np.float64(U[u, t]) * np.float64(V[it, t])
            s[j] = acc
        mx = s[0]
        for j in range(1, S + 1):
            if s[j] > mx:
                mx = s[j]
        z = 0.0
        for j in range(S + 1):
            coef[j] = np.exp(s[j] - mx)
            z += coef[j]
        loss = np.log(z) + mx - s[0]
        losses[b] = loss if loss > 0.0 else 0.0
        for j in range(S + 1):
            coef[j] /= z
        coef[0] -= 1.0

        if strategy != USERONLYBP:
            for j in range(S + 1):
                it = pos[b] if j == 0 else negs[b, j - 1]
                if not vmark[it]:
                    vmark[it] = True
                    touched_v[n_tv] = it
                    n_tv += 1
                c = coef[j]
                for t in range(d):
                    gv[it, t] += c * U[u, t]
        if strategy != ONEBP:
            if not umark[u]:
                umark[u] = True
                touched_u[n_tu] = u
                n_tu += 1
            for j in range(S + 1):
                it = pos[b] if j == 0 else negs[b, j - 1]
                c = coef[j]
                for t in range(d):
                    gu[u, t] += c * V[it, t]

    status = OK
    for k in range(n_tv):
        it = touched_v[k]
        for t in range(d):
            x = np.float64(V[it, t]) - lr * gv[it, t]
            V[it, t] = x
            if not np.isfinite(V[it, t]):
                status = NON_FINITE
            gv[it, t] = 0.0
        vmark[it] = False
    for k in range(n_tu):
        u = touched_u[k]
        for t in range(d):
            x = np.float64(U[u, t]) - lr * gu[u, t]
            U[u, t] = x
            if not np.isfinite(U[u, t]):
                status = NON_FINITE
            gu[u, t] = 0.0
        umark[u] = False

    # moving aggregation, one sample at a time in batch order
    if strategy == ONEBP:
        for b in range(B):
            u = users[b]
            p = pos[b]
            for t in range(d):
                x = beta * np.float64(U[u, t]) + (1.0 - beta) * np.float64(V[p, t])
                U[u, t] = x
                if not np.isfinite(U[u, t]):
                    status = NON_FINITE
    elif strategy == USERONLYBP:
        for b in range(B):
            u = users[b]
            p = pos[b]
            for t in range(d):
                x = beta * np.float64(V[p, t]) + (1.0 - beta) * np.float64(U[u, t])
                V[p, t] = x
                if not np.isfinite(V[p, t]):
                    status = NON_FINITE
    return status


@njit(cache=True)
def run_epoch(U, V, ptr, adj, sample_users, sample_items, batch_size, n_neg, lr, beta,
              strategy, losses):
    """All batches of one epoch over pre-shuffled samples.

    Returns ``(status, batch_index)``; ``batch_index`` is -1 on success.
    """
    n = sample_users.shape[0]
    M, d = U.shape
    N = V.shape[0]
    gu = np.zeros((M, d))
    gv = np.zeros((N, d))
    umark = np.zeros(M, dtype=np.bool_)
    vmark = np.zeros(N, dtype=np.bool_)
    touched_u = np.empty(batch_size, dtype=np.int64)
    touched_v = np.empty(batch_size * (n_neg + 1), dtype=np.int64)
    negs = np.empty((batch_size, n_neg), dtype=np.int64)
    b = 0
    for lo in range(0, n, batch_size):
        hi = min(lo + batch_size, n)
        users = sample_users[lo:hi]
        bneg = negs[: hi - lo]
        if draw_negatives(ptr, adj, N, users, n_neg, bneg) >= 0:
            return NOT_ENOUGH_ITEMS, b
        status = batch_update(U, V, users, sample_items[lo:hi], bneg, lr, beta, strategy,
                              gu, gv, umark, vmark, touched_u, touched_v, losses[lo:hi])
        if status != OK:
            return status, b
        b += 1
    return OK, -1
