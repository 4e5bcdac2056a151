"""Latent item types: KMeans over item embeddings and per-cluster hit statistics."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import DataSplit
from .evaluation import recommend_topk_many
from .model import EmbeddingModel

DEFAULT_CLUSTERS = 6


@dataclass
class Clustering:
    k: int
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    history: list[float] = field(default_factory=list)  # inertia after each iteration
    iterations: int = 0


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centroids.T
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeans_pp(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = [int(rng.integers(n))]
    closest = _sq_dists(points, points[centers]).ravel()
    for _ in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # every point already sits on a center; take any unused point
            free = np.setdiff1d(np.arange(n), centers)
            nxt = int(free[0])
        else:
            nxt = int(rng.choice(n, p=closest / total))
        centers.append(nxt)
        closest = np.minimum(closest, _sq_dists(points, points[[nxt]]).ravel())
    return points[centers].copy()


def kmeans(points: np.ndarray, k: int = DEFAULT_CLUSTERS, max_iters: int = 100, seed: int = 0) -> Clustering:
    """Lloyd's algorithm with k-means++ seeding.

    Stops after ``max_iters`` iterations or once assignments stop changing.
    A cluster that ends up empty takes over the point farthest from its
    current centroid.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("points must be a 2-D array")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"cannot form {k} clusters from {n} points")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp(points, k, rng)
    assign = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(points, centroids)
        new = np.argmin(d, axis=1)
        best = d[np.arange(n), new]
        for c in range(k):
            if np.any(new == c):
                continue
            sizes = np.bincount(new, minlength=k)
            movable = sizes[new] > 1
            far = int(np.argmax(np.where(movable, best, -1.0)))
            new[far] = c
            best[far] = 0.0
        changed = not np.array_equal(new, assign)
        assign = new
        for c in range(k):
            centroids[c] = points[assign == c].mean(axis=0)
        inertia = float(((points - centroids[assign]) ** 2).sum())
        history.append(inertia)
        if not changed:
            break
    return Clustering(k=k, assignments=assign, centroids=centroids,
                      inertia=history[-1], history=history, iterations=it)


@dataclass
class ClusterStats:
    recommended: int
    hits: int
    test: int
    share: float
    precision: float | None
    recall: float | None


@dataclass
class ClusterReport:
    k_list: int
    num_users: int
    clusters: dict[int, ClusterStats]

    def to_dict(self) -> dict:
        return {
            str(c): {"share": s.share, "precision": s.precision, "recall": s.recall,
                     "recommended": s.recommended, "hits": s.hits, "test": s.test}
            for c, s in self.clusters.items()
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def cluster_report(clustering: Clustering, split: DataSplit, model: EmbeddingModel,
                   user: int | None = None, k_list: int = 10) -> ClusterReport:
    """Bucket top-K recommendations and held-out items by item cluster.

    With ``user=None`` the counts are pooled over all evaluable users before
    the ratios are taken.
    """
    labels = np.asarray(clustering.assignments)
    if labels.size != model.num_items:
        raise ValueError("clustering does not cover every item")
    if user is None:
        users = np.asarray(split.evaluable_users, dtype=np.int64)
    else:
        if not 0 <= user < model.num_users:
            raise IndexError(f"user {user} out of range")
        users = np.asarray([user], dtype=np.int64)
    if users.size == 0:
        raise ValueError("no users to report on")

    top = recommend_topk_many(model, split.train, users, k_list)
    hit = split.test.contains(np.repeat(users, k_list), top.ravel())
    test_items = np.concatenate([split.test.items_of(int(u)) for u in users])

    k = clustering.k
    rec = np.bincount(labels[top.ravel()], minlength=k)
    hits = np.bincount(labels[top.ravel()[hit]], minlength=k)
    tst = np.bincount(labels[test_items], minlength=k) if test_items.size else np.zeros(k, np.int64)
    total = rec.sum()
    clusters = {
        c: ClusterStats(
            recommended=int(rec[c]), hits=int(hits[c]), test=int(tst[c]),
            share=float(rec[c] / total),
            precision=float(hits[c] / rec[c]) if rec[c] else None,
            recall=float(hits[c] / tst[c]) if tst[c] else None,
        )
        for c in range(k)
    }
    return ClusterReport(k_list=k_list, num_users=int(users.size), clusters=clusters)


def write_items_clustered(path: str | Path, model: EmbeddingModel, clustering: Clustering) -> None:
    d = model.dim
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("item,cluster," + ",".join(f"dim{j}" for j in range(d)) + "\n")
        for i, row in enumerate(model.item_embeddings.tolist()):
            fh.write(f"{i},{int(clustering.assignments[i])}," + ",".join(repr(float(x)) for x in row) + "\n")
