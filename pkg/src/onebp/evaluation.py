"""Top-K recommendation and P/R/F1/NDCG over held-out interactions."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .data import DataSplit, InteractionDataset
from .model import EmbeddingModel, score_all_items

DEFAULT_CUTOFFS = (5, 10, 20)
METRICS = ("precision", "recall", "f1", "ndcg")
USER_CHUNK = 512


@dataclass
class EvalReport:
    cutoffs: list[int]
    precision: dict[int, float] = field(default_factory=dict)
    recall: dict[int, float] = field(default_factory=dict)
    f1: dict[int, float] = field(default_factory=dict)
    ndcg: dict[int, float] = field(default_factory=dict)
    num_users_evaluated: int = 0

    def metric(self, name: str) -> dict[int, float]:
        return getattr(self, name)

    def rows(self) -> list[tuple[str, int, float]]:
        return [(m, k, self.metric(m)[k]) for k in self.cutoffs for m in METRICS]

    def to_dict(self) -> dict:
        out: dict = {"cutoffs": list(self.cutoffs), "num_users_evaluated": self.num_users_evaluated}
        for m in METRICS:
            out[m] = {str(k): v for k, v in self.metric(m).items()}
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "K", "value"])
        for m, k, v in self.rows():
            w.writerow([m, k, repr(v)])
        return buf.getvalue()


def _masked_scores(model: EmbeddingModel, train: InteractionDataset, users: np.ndarray) -> np.ndarray:
    U = model.user_embeddings[users].astype(np.float64)
    s = U @ model.item_embeddings.astype(np.float64).T
    ptr = train.user_ptr
    counts = ptr[users + 1] - ptr[users]
    rows = np.repeat(np.arange(users.size), counts)
    cols = np.concatenate([train.items_of(int(u)) for u in users]) if users.size else np.empty(0, np.int64)
    s[rows, cols] = -np.inf
    return s


def _topk_row(s: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest finite entries, score descending then index ascending."""
    finite = np.isfinite(s)
    if finite.sum() < k:
        raise ValueError(f"only {int(finite.sum())} candidate items, need {k}")
    thr = -np.partition(-s, k - 1)[k - 1]
    above = np.flatnonzero(s > thr)
    above = above[np.lexsort((above, -s[above]))]
    ties = np.flatnonzero(s == thr)
    return np.concatenate([above, ties[: k - above.size]])


def _topk_rows(s: np.ndarray, k: int) -> np.ndarray:
    """Row-wise :func:`_topk_row`, vectorized with an exact tie fallback."""
    n = s.shape[1]
    if np.isfinite(s).sum(axis=1).min(initial=n) < k:
        bad = int(np.argmin(np.isfinite(s).sum(axis=1)))
        raise ValueError(f"row {bad} has fewer than {k} candidate items")
    part = np.argpartition(-s, k - 1, axis=1)[:, :k]
    vals = np.take_along_axis(s, part, axis=1)
    order = np.lexsort((part, -vals), axis=1)
    top = np.take_along_axis(part, order, axis=1)
    # a tie at the K-th score may have admitted a larger index than an excluded equal one
    thr = np.take_along_axis(s, top[:, -1:], axis=1)
    tied_all = (s == thr).sum(axis=1)
    tied_sel = (np.take_along_axis(s, top, axis=1) == thr).sum(axis=1)
    for r in np.flatnonzero(tied_all != tied_sel):
        top[r] = _topk_row(s[r], k)
    return top


def recommend_topk(model: EmbeddingModel, train: InteractionDataset, user: int, k: int) -> np.ndarray:
    s = score_all_items(model, user)
    s[train.items_of(user)] = -np.inf
    return _topk_row(s, k)


def recommend_topk_many(model: EmbeddingModel, train: InteractionDataset, users: np.ndarray, k: int) -> np.ndarray:
    users = np.asarray(users, dtype=np.int64)
    out = np.empty((users.size, k), dtype=np.int64)
    for lo in range(0, users.size, USER_CHUNK):
        chunk = users[lo:lo + USER_CHUNK]
        out[lo:lo + chunk.size] = _topk_rows(_masked_scores(model, train, chunk), k)
    return out


def metrics_from_hits(hits: np.ndarray, n_test: np.ndarray, cutoffs) -> dict[str, dict[int, float]]:
    """Average P/R/F1/NDCG over users from a ``(users, Kmax)`` hit matrix."""
    n_test = np.asarray(n_test, dtype=np.float64)
    kmax = hits.shape[1]
    disc = 1.0 / np.log2(np.arange(2, kmax + 2))
    idcg_cum = np.cumsum(disc)
    out: dict[str, dict[int, float]] = {m: {} for m in METRICS}
    for k in cutoffs:
        h = hits[:, :k]
        nh = h.sum(axis=1)
        p = nh / k
        r = nh / n_test
        denom = p + r
        f1 = np.divide(2 * p * r, denom, out=np.zeros_like(p), where=denom > 0)
        dcg = h @ disc[:k]
        idcg = idcg_cum[np.minimum(k, n_test).astype(np.int64) - 1]
        out["precision"][k] = float(p.mean())
        out["recall"][k] = float(r.mean())
        out["f1"][k] = float(f1.mean())
        out["ndcg"][k] = float((dcg / idcg).mean())
    return out


def evaluate(model: EmbeddingModel, split: DataSplit, cutoffs=DEFAULT_CUTOFFS) -> EvalReport:
    cutoffs = sorted({int(k) for k in cutoffs})
    if not cutoffs or cutoffs[0] < 1:
        raise ValueError("cutoffs must be positive integers")
    users = np.asarray(split.evaluable_users, dtype=np.int64)
    if users.size == 0:
        raise ValueError("no evaluable users")
    kmax = cutoffs[-1]
    top = recommend_topk_many(model, split.train, users, kmax)
    hits = split.test.contains(np.repeat(users, kmax), top.ravel()).reshape(top.shape)
    n_test = split.test.degree()[users]
    vals = metrics_from_hits(hits.astype(np.float64), n_test, cutoffs)
    return EvalReport(cutoffs=cutoffs, num_users_evaluated=int(users.size), **vals)
