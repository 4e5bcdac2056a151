"""Independent reference implementations shared by the unit and acceptance tests."""
import math

import numpy as np

from onebp.data import DataSplit, InteractionDataset


def brute_force(U, V, train_sets, test_sets, users, cutoffs):
    """Literal per-user loops, full sort, textbook formulas."""
    out = {m: {} for m in ("precision", "recall", "f1", "ndcg")}
    for K in cutoffs:
        acc = {m: [] for m in out}
        for u in users:
            scored = []
            for i in range(V.shape[0]):
                if i in train_sets[u]:
                    continue
                s = sum(float(a) * float(b) for a, b in zip(U[u], V[i]))
                scored.append((-s, i))
            ranked = [i for _, i in sorted(scored)][:K]
            test = test_sets[u]
            hit_ranks = [r for r, i in enumerate(ranked, start=1) if i in test]
            p, r = len(hit_ranks) / K, len(hit_ranks) / len(test)
            f1 = 0.0 if p + r == 0 else 2 * p * r / (p + r)
            dcg = sum(1 / math.log2(r_ + 1) for r_ in hit_ranks)
            idcg = sum(1 / math.log2(i + 1) for i in range(1, min(K, len(test)) + 1))
            for name, v in zip(out, (p, r, f1, dcg / idcg)):
                acc[name].append(v)
        for name in out:
            out[name][K] = sum(acc[name]) / len(acc[name])
    return out


def random_instance(rng):
    M, N = rng.integers(2, 21), rng.integers(8, 21)
    d = rng.integers(1, 5)
    U = rng.integers(-2, 3, (M, d)).astype(np.float32)
    V = rng.integers(-2, 3, (N, d)).astype(np.float32)
    train_sets, test_sets = [], []
    tu, ti, su, si = [], [], [], []
    for u in range(M):
        items = rng.permutation(N)
        n_train = rng.integers(0, N // 2)
        n_test = rng.integers(0, 4)
        tr, te = set(items[:n_train].tolist()), set(items[n_train:n_train + n_test].tolist())
        train_sets.append(tr)
        test_sets.append(te)
        tu += [u] * len(tr); ti += sorted(tr)
        su += [u] * len(te); si += sorted(te)
    train = InteractionDataset.from_pairs(tu, ti, M, N)
    test = InteractionDataset.from_pairs(su, si, M, N)
    users = [u for u in range(M) if test_sets[u]]
    return U, V, train_sets, test_sets, DataSplit(train, test, np.array(users, np.int64))
