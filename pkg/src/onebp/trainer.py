"""Mini-batch training with swappable backpropagation strategies.

* ``twobp``: SGD on both towers.
* ``onebp``: SGD on items only; each user then moves toward the freshly
  updated positive item, ``u <- beta*u + (1-beta)*v_pos``.
* ``useronlybp``: SGD on users only; each positive item then moves toward
  the freshly updated user. Negatives are left alone.
"""
from __future__ import annotations

import enum
import functools
import logging
import time
from dataclasses import asdict, dataclass, fields
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .data import DataSplit, InteractionDataset
from .loss import ContrastiveSampleGrad, infonce_coefficients
from .model import DivergenceError, EmbeddingModel
from . import _kernels
from .sampler import SamplingError

logger = logging.getLogger(__name__)

TRAIN_SEED_OFFSET = 1


class Strategy(str, enum.Enum):
    TWOBP = "twobp"
    ONEBP = "onebp"
    USERONLYBP = "useronlybp"


# Tuned on a seeded 80/20 MovieLens-100k holdout for P@10 after 100 epochs.
DEFAULT_LEARNING_RATE = {
    Strategy.TWOBP: 0.002,
    Strategy.ONEBP: 0.02,
    Strategy.USERONLYBP: 0.02,
}


@dataclass
class TrainConfig:
    """Training hyperparameters.

    ``learning_rate=None`` resolves to the tuned default of ``strategy``.
    """

    dim: int = 64
    learning_rate: float | None = None
    beta: float = 0.99
    num_negatives: int = 5
    batch_size: int = 1024
    epochs: int = 100
    seed: int = 0
    strategy: Strategy = Strategy.ONEBP

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if self.learning_rate is None:
            self.learning_rate = DEFAULT_LEARNING_RATE[self.strategy]
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [0, 1]")
        if self.num_negatives < 1:
            raise ValueError("num_negatives must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_dict(cls, values: dict) -> "TrainConfig":
        unknown = sorted(set(values) - set(cls.field_names()))
        if unknown:
            raise KeyError(
                f"unknown config key(s) {unknown}; accepted keys: {cls.field_names()}"
            )
        return cls(**values)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["strategy"] = self.strategy.value
        return d


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    wall_seconds: float


@dataclass
class NegativeDraw:
    user: int
    positive: int
    negatives: np.ndarray


# -- single-sample update rules ------------------------------------------------

def _store(table: np.ndarray, idx, value: np.ndarray) -> None:
    # check after rounding, float32 overflows long before float64 does
    with np.errstate(over="ignore", invalid="ignore"):
        value = np.asarray(value, dtype=table.dtype)
    if not np.isfinite(value).all():
        raise DivergenceError(f"non-finite update for row(s) {idx}")
    table[idx] = value


def _item_sgd(model: EmbeddingModel, draw: NegativeDraw, grads: ContrastiveSampleGrad, lr: float):
    items = model.item_embeddings
    pos = int(draw.positive)
    _store(items, pos, items[pos].astype(np.float64) - lr * grads.grad_positive)
    for k, g in zip(np.asarray(draw.negatives).tolist(), grads.grad_negatives):
        _store(items, k, items[k].astype(np.float64) - lr * g)


def _user_sgd(model: EmbeddingModel, draw: NegativeDraw, grads: ContrastiveSampleGrad, lr: float):
    users = model.user_embeddings
    u = int(draw.user)
    _store(users, u, users[u].astype(np.float64) - lr * grads.grad_user)


def apply_twobp(model: EmbeddingModel, draw: NegativeDraw, grads: ContrastiveSampleGrad, lr: float):
    _user_sgd(model, draw, grads, lr)
    _item_sgd(model, draw, grads, lr)


def apply_onebp(model: EmbeddingModel, draw: NegativeDraw, grads: ContrastiveSampleGrad,
                lr: float, beta: float):
    _item_sgd(model, draw, grads, lr)
    u, pos = int(draw.user), int(draw.positive)
    new = beta * model.user_embeddings[u].astype(np.float64) + (1.0 - beta) * model.item_embeddings[pos].astype(np.float64)
    _store(model.user_embeddings, u, new)


def apply_useronlybp(model: EmbeddingModel, draw: NegativeDraw, grads: ContrastiveSampleGrad,
                     lr: float, beta: float):
    _user_sgd(model, draw, grads, lr)
    u, pos = int(draw.user), int(draw.positive)
    new = beta * model.item_embeddings[pos].astype(np.float64) + (1.0 - beta) * model.user_embeddings[u].astype(np.float64)
    _store(model.item_embeddings, pos, new)


# -- batched kernels -------------------------------------------------------------

def _groups(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stable grouping of equal indices: (unique rows, sort order, CSR indptr)."""
    order = np.argsort(idx, kind="stable")
    sidx = idx[order]
    starts = np.flatnonzero(np.r_[True, sidx[1:] != sidx[:-1]])
    return sidx[starts], order, np.r_[starts, idx.size]


def _segment_sum(idx: np.ndarray, values: np.ndarray, weights: np.ndarray | None = None,
                 cols: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Sum weighted rows of ``values`` into the table rows named by ``idx``.

    Entry ``e`` contributes ``weights[e] * values[cols[e]]`` to row ``idx[e]``
    (``cols`` defaults to ``arange``). Returns sorted unique rows and their sums.
    """
    hits = np.bincount(idx)
    rows = np.flatnonzero(hits)
    relabel = np.cumsum(hits > 0) - 1
    data = np.ones(idx.size) if weights is None else weights
    cols = np.arange(idx.size) if cols is None else cols
    onehot = sp.csr_matrix((data, (relabel[idx], cols)), shape=(rows.size, values.shape[0]))
    return rows, onehot @ values


def moving_aggregate(table: np.ndarray, targets: np.ndarray, sources: np.ndarray, beta: float) -> np.ndarray:
    """Apply ``table[t] <- beta*table[t] + (1-beta)*src`` for each (t, src) in order.

    A row hit ``m`` times ends at ``beta^m * row + (1-beta) * sum_l beta^(m-l) * src_l``,
    which is what the sequential loop computes; evaluated here in one pass.
    """
    rows, order, indptr = _groups(targets)
    counts = np.diff(indptr)
    # in sorted order, hits on the same row that come later in the batch
    later = np.repeat(indptr[1:], counts) - 1 - np.arange(targets.size)
    w = (1.0 - beta) * np.power(beta, later)
    acc = sp.csr_matrix((w, order, indptr), shape=(rows.size, targets.size)) @ sources
    table[rows] = np.power(beta, counts)[:, None] * table[rows].astype(np.float64) + acc
    return rows


def train_batch(model: EmbeddingModel, users: np.ndarray, positives: np.ndarray,
                negatives: np.ndarray, cfg: TrainConfig) -> np.ndarray:
    """One mini-batch update; returns the per-sample losses (pre-batch snapshot).

    All gradients come from the pre-batch tables. Item gradients that hit the
    same row within the batch are summed.
    """
    U = model.user_embeddings
    V = model.item_embeddings
    strategy = cfg.strategy
    lr, beta = cfg.learning_rate, cfg.beta

    items = np.concatenate([positives[:, None], negatives], axis=1)
    u_b = U[users].astype(np.float64)
    v_b = V[items].astype(np.float64)
    losses, coef = infonce_coefficients(u_b, v_b)

    if strategy is not Strategy.ONEBP:
        grad_user = np.matmul(coef[:, None, :], v_b)[:, 0, :]
        rows, g = _segment_sum(users, grad_user)
        U[rows] = U[rows].astype(np.float64) - lr * g
        touched_users = rows

    if strategy is Strategy.USERONLYBP:
        touched_items = moving_aggregate(V, positives, U[users].astype(np.float64), beta)
    else:
        batch_col = np.repeat(np.arange(users.size), items.shape[1])
        rows, g = _segment_sum(items.ravel(), u_b, coef.ravel(), batch_col)
        V[rows] = V[rows].astype(np.float64) - lr * g
        touched_items = rows
        if strategy is Strategy.ONEBP:
            touched_users = moving_aggregate(U, users, V[positives].astype(np.float64), beta)

    if not (np.isfinite(U[touched_users]).all() and np.isfinite(V[touched_items]).all()):
        raise DivergenceError("non-finite embedding after update")
    return losses


_STRATEGY_CODE = {
    Strategy.TWOBP: _kernels.TWOBP,
    Strategy.ONEBP: _kernels.ONEBP,
    Strategy.USERONLYBP: _kernels.USERONLYBP,
}


def train_epoch(model: EmbeddingModel, train: InteractionDataset, cfg: TrainConfig,
                rng: np.random.Generator, epoch: int = 0) -> EpochStats:
    """Shuffle all training pairs, then run every mini-batch of one epoch.

    Timing covers shuffling, sampling and updates; no IO.
    """
    if model.num_users != train.num_users or model.num_items != train.num_items:
        raise ValueError(
            f"model shape ({model.num_users}, {model.num_items}) does not match "
            f"dataset ({train.num_users}, {train.num_items})"
        )
    n = train.num_interactions
    losses = np.zeros(n)
    start = time.perf_counter()
    order = rng.permutation(n)
    _kernels.seed(int(rng.integers(0, 2**31 - 1)))
    status, batch = _kernels.run_epoch(
        model.user_embeddings, model.item_embeddings,
        train.user_ptr, train.user_items,
        train.users[order], train.user_items[order],
        cfg.batch_size, cfg.num_negatives, float(cfg.learning_rate), float(cfg.beta),
        _STRATEGY_CODE[cfg.strategy], losses,
    )
    elapsed = time.perf_counter() - start
    if status == _kernels.NON_FINITE:
        raise DivergenceError(f"non-finite embedding in epoch {epoch}, batch {batch}")
    if status == _kernels.NOT_ENOUGH_ITEMS:
        raise SamplingError(
            f"epoch {epoch}, batch {batch}: a user has fewer than "
            f"{cfg.num_negatives} uninteracted items"
        )
    return EpochStats(epoch=epoch, mean_loss=float(losses.sum()) / max(n, 1), wall_seconds=elapsed)


@functools.lru_cache(maxsize=None)
def warm_up() -> None:
    """Compile (or load) the training kernels so epoch timings exclude JIT cost."""
    tiny = InteractionDataset.from_pairs([0, 1], [0, 1], 2, 4)
    cfg = TrainConfig(dim=2, learning_rate=0.0, beta=1.0, num_negatives=1, batch_size=2, epochs=1)
    for strategy in Strategy:
        cfg.strategy = strategy
        model = EmbeddingModel(np.zeros((2, 2), np.float32), np.zeros((4, 2), np.float32))
        train_epoch(model, tiny, cfg, np.random.default_rng(0))


EvalHook = Callable[[int, EmbeddingModel], None]


def train(model: EmbeddingModel, split: DataSplit | InteractionDataset, cfg: TrainConfig,
          hook: EvalHook | None = None, hook_every: int = 0) -> list[EpochStats]:
    """Run ``cfg.epochs`` epochs; ``hook(epoch, model)`` fires every ``hook_every`` epochs."""
    train_set = split.train if isinstance(split, DataSplit) else split
    warm_up()
    rng = np.random.default_rng(cfg.seed + TRAIN_SEED_OFFSET)
    stats: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        s = train_epoch(model, train_set, cfg, rng, epoch)
        stats.append(s)
        logger.info("epoch %d  loss %.5f  %.3fs", epoch, s.mean_loss, s.wall_seconds)
        if hook is not None and hook_every and (epoch + 1) % hook_every == 0:
            hook(epoch, model)
    return stats
