"""Two-tower projection model: one embedding table per tower."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

INIT_STD = 0.1
MAGIC = b"OBP1"


class DivergenceError(FloatingPointError):
    pass


@dataclass(eq=False)
class EmbeddingModel:
    user_embeddings: np.ndarray  # (M, d) float32
    item_embeddings: np.ndarray  # (N, d) float32

    def __post_init__(self):
        self.user_embeddings = np.ascontiguousarray(self.user_embeddings, dtype=np.float32)
        self.item_embeddings = np.ascontiguousarray(self.item_embeddings, dtype=np.float32)
        if self.user_embeddings.ndim != 2 or self.item_embeddings.ndim != 2:
            raise ValueError("embedding tables must be 2-D")
        if self.user_embeddings.shape[1] != self.item_embeddings.shape[1]:
            raise ValueError("user and item tables must share the embedding dimension")

    @property
    def dim(self) -> int:
        return self.user_embeddings.shape[1]

    @property
    def num_users(self) -> int:
        return self.user_embeddings.shape[0]

    @property
    def num_items(self) -> int:
        return self.item_embeddings.shape[0]

    def copy(self) -> "EmbeddingModel":
        return EmbeddingModel(self.user_embeddings.copy(), self.item_embeddings.copy())

    def check_finite(self) -> None:
        if not (np.isfinite(self.user_embeddings).all() and np.isfinite(self.item_embeddings).all()):
            raise DivergenceError("non-finite embedding value")

    def to_bytes(self) -> bytes:
        header = MAGIC + struct.pack("<QQQ", self.num_users, self.num_items, self.dim)
        return (
            header
            + np.ascontiguousarray(self.user_embeddings, dtype="<f4").tobytes()
            + np.ascontiguousarray(self.item_embeddings, dtype="<f4").tobytes()
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "EmbeddingModel":
        if blob[:4] != MAGIC:
            raise ValueError("not an OBP1 embedding dump")
        m, n, d = struct.unpack("<QQQ", blob[4:28])
        expected = 28 + 4 * d * (m + n)
        if len(blob) != expected:
            raise ValueError(f"truncated dump: expected {expected} bytes, got {len(blob)}")
        body = np.frombuffer(blob, dtype="<f4", offset=28)
        users = body[: m * d].reshape(m, d).astype(np.float32)
        items = body[m * d:].reshape(n, d).astype(np.float32)
        return cls(users, items)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingModel":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path: str | Path) -> None:
        d = self.dim
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("entity,index," + ",".join(f"dim{k}" for k in range(d)) + "\n")
            for entity, table in (("user", self.user_embeddings), ("item", self.item_embeddings)):
                for idx, row in enumerate(table.tolist()):
                    fh.write(f"{entity},{idx}," + ",".join(repr(float(x)) for x in row) + "\n")


def init_model(num_users: int, num_items: int, dim: int, seed: int) -> EmbeddingModel:
    """Draw both tables i.i.d. from N(0, 0.1^2) with a seeded generator."""
    if num_users <= 0 or num_items <= 0 or dim <= 0:
        raise ValueError("num_users, num_items and dim must be positive")
    rng = np.random.default_rng(seed)
    users = rng.normal(0.0, INIT_STD, size=(num_users, dim)).astype(np.float32)
    items = rng.normal(0.0, INIT_STD, size=(num_items, dim)).astype(np.float32)
    return EmbeddingModel(users, items)


def score(model: EmbeddingModel, user: int, item: int) -> float:
    if not 0 <= user < model.num_users:
        raise IndexError(f"user {user} out of range [0, {model.num_users})")
    if not 0 <= item < model.num_items:
        raise IndexError(f"item {item} out of range [0, {model.num_items})")
    u = model.user_embeddings[user].astype(np.float64)
    v = model.item_embeddings[item].astype(np.float64)
    return float(u @ v)


def score_all_items(model: EmbeddingModel, user: int) -> np.ndarray:
    if not 0 <= user < model.num_users:
        raise IndexError(f"user {user} out of range [0, {model.num_users})")
    u = model.user_embeddings[user].astype(np.float64)
    return model.item_embeddings.astype(np.float64) @ u
