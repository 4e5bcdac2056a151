"""Interaction logs: parsing, binarization and per-user holdout splits."""
from __future__ import annotations

import enum
import functools
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Iterable

import numpy as np


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class Format(str, enum.Enum):
    MOVIELENS_TAB = "movielens"
    CSV_PAIRS = "csv"


@dataclass(frozen=True, eq=False)
class InteractionDataset:
    """Binary user-item interactions over dense 0-based indices.

    ``user_ptr``/``user_items`` is a CSR layout: the items of user ``u`` are
    ``user_items[user_ptr[u]:user_ptr[u + 1]]``, sorted ascending.
    """

    num_users: int
    num_items: int
    user_ptr: np.ndarray
    user_items: np.ndarray
    user_ids: tuple[str, ...] = field(default=(), repr=False)
    item_ids: tuple[str, ...] = field(default=(), repr=False)

    @classmethod
    def from_pairs(
        cls,
        users: Iterable[int] | np.ndarray,
        items: Iterable[int] | np.ndarray,
        num_users: int,
        num_items: int,
        user_ids: tuple[str, ...] = (),
        item_ids: tuple[str, ...] = (),
    ) -> "InteractionDataset":
        users = np.asarray(users, dtype=np.int64).ravel()
        items = np.asarray(items, dtype=np.int64).ravel()
        if users.shape != items.shape:
            raise ValueError("users and items must have equal length")
        if users.size and (users.min() < 0 or users.max() >= num_users):
            raise ValueError("user index out of range")
        if items.size and (items.min() < 0 or items.max() >= num_items):
            raise ValueError("item index out of range")
        keys = np.unique(users * num_items + items)
        u, i = np.divmod(keys, num_items)
        ptr = np.zeros(num_users + 1, dtype=np.int64)
        np.cumsum(np.bincount(u, minlength=num_users), out=ptr[1:])
        ptr.flags.writeable = False
        i.flags.writeable = False
        return cls(num_users, num_items, ptr, i, tuple(user_ids), tuple(item_ids))

    @property
    def num_interactions(self) -> int:
        return int(self.user_items.size)

    @functools.cached_property
    def users(self) -> np.ndarray:
        """User index of every interaction, aligned with ``user_items``."""
        return np.repeat(np.arange(self.num_users, dtype=np.int64), np.diff(self.user_ptr))

    @property
    def interactions(self) -> np.ndarray:
        """``(n, 2)`` array of (user, item) pairs sorted by user then item."""
        return np.column_stack([self.users, self.user_items])

    @functools.cached_property
    def keys(self) -> np.ndarray:
        """Sorted ``user * num_items + item`` codes, used for fast membership."""
        return self.users * self.num_items + self.user_items

    def items_of(self, user: int) -> np.ndarray:
        return self.user_items[self.user_ptr[user]:self.user_ptr[user + 1]]

    def degree(self) -> np.ndarray:
        return self._degree

    @functools.cached_property
    def _degree(self) -> np.ndarray:
        return np.diff(self.user_ptr)

    def contains(self, users: np.ndarray, items: np.ndarray) -> np.ndarray:
        """Vectorized membership test for (user, item) pairs."""
        keys = self.keys
        q = np.asarray(users, dtype=np.int64) * self.num_items + np.asarray(items, dtype=np.int64)
        if keys.size == 0:
            return np.zeros(q.shape, dtype=bool)
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, keys.size - 1)
        return keys[pos] == q

    def density(self) -> float:
        return density(self)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, InteractionDataset):
            return NotImplemented
        return (
            self.num_users == other.num_users
            and self.num_items == other.num_items
            and np.array_equal(self.user_ptr, other.user_ptr)
            and np.array_equal(self.user_items, other.user_items)
        )

    def to_csv(self, path: str | Path | None = None) -> str:
        """Serialize as ``user,item`` lines of dense indices."""
        pairs = self.interactions
        text = "".join(f"{u},{i}\n" for u, i in pairs.tolist())
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


@dataclass(frozen=True, eq=False)
class DataSplit:
    train: InteractionDataset
    test: InteractionDataset
    evaluable_users: np.ndarray


def _read_bytes(source: BinaryIO | bytes | str | Path) -> tuple[bytes, str | None]:
    if isinstance(source, bytes):
        return source, None
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes(), str(source)
    return source.read(), getattr(source, "name", None)


def parse_interactions(
    source: BinaryIO | bytes | str | Path, fmt: Format | str = Format.MOVIELENS_TAB
) -> InteractionDataset:
    """Parse a raw interaction log into an :class:`InteractionDataset`.

    Raw ids are remapped to dense indices in order of first appearance.
    Every row counts as an interaction regardless of its rating, and
    duplicate pairs collapse into one.
    """
    fmt = Format(fmt)
    raw, name = _read_bytes(source)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"input is not valid UTF-8 ({exc})", source=name) from None

    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users: list[int] = []
    items: list[int] = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        if fmt is Format.MOVIELENS_TAB:
            parts = line.split("\t")
            if len(parts) != 4:
                raise ParseError(f"expected 4 tab-separated fields, got {len(parts)}", lineno, name)
        else:
            parts = line.split(",")
            if len(parts) != 2:
                raise ParseError(f"expected 'user,item', got {len(parts)} fields", lineno, name)
        parts = [p.strip() for p in parts]
        if fmt is Format.MOVIELENS_TAB:
            for p in parts:
                try:
                    int(p)
                except ValueError:
                    raise ParseError(f"non-integer field {p!r}", lineno, name) from None
        elif not parts[0] or not parts[1]:
            raise ParseError("empty identifier", lineno, name)
        u = user_index.setdefault(parts[0], len(user_index))
        i = item_index.setdefault(parts[1], len(item_index))
        users.append(u)
        items.append(i)

    if not users:
        raise ParseError("no interactions in input", source=name)
    return InteractionDataset.from_pairs(
        users, items, len(user_index), len(item_index),
        tuple(user_index), tuple(item_index),
    )


def density(dataset: InteractionDataset) -> float:
    if dataset.num_users <= 0 or dataset.num_items <= 0:
        raise ValueError("density needs at least one user and one item")
    return dataset.num_interactions / (dataset.num_users * dataset.num_items)


def split_holdout(dataset: InteractionDataset, test_fraction: float = 0.2, seed: int = 0) -> DataSplit:
    """Per-user random holdout.

    Each user with at least two interactions sends ``round(test_fraction * n)``
    of them (clamped to ``[1, n - 1]``) to the test side. Users with fewer
    than two interactions stay entirely in train and are not evaluable.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    if dataset.num_interactions == 0:
        raise ValueError("cannot split a dataset with no interactions")

    rng = np.random.default_rng(seed)
    train_mask = np.ones(dataset.num_interactions, dtype=bool)
    evaluable = []
    for u in range(dataset.num_users):
        lo, hi = int(dataset.user_ptr[u]), int(dataset.user_ptr[u + 1])
        n = hi - lo
        if n < 2:
            continue
        n_test = min(max(int(round(test_fraction * n)), 1), n - 1)
        picked = rng.choice(n, size=n_test, replace=False)
        train_mask[lo + picked] = False
        evaluable.append(u)

    users = dataset.users
    items = dataset.user_items
    kw = dict(num_users=dataset.num_users, num_items=dataset.num_items,
              user_ids=dataset.user_ids, item_ids=dataset.item_ids)
    train = InteractionDataset.from_pairs(users[train_mask], items[train_mask], **kw)
    test = InteractionDataset.from_pairs(users[~train_mask], items[~train_mask], **kw)
    return DataSplit(train, test, np.asarray(evaluable, dtype=np.int64))


def load_split(directory: str | Path) -> DataSplit:
    """Load ``train.csv``/``test.csv`` (dense indices) plus ``meta.json`` shapes."""
    import json

    directory = Path(directory)
    meta = json.loads((directory / "meta.json").read_text())
    m, n = int(meta["num_users"]), int(meta["num_items"])

    def read(name: str) -> InteractionDataset:
        path = directory / name
        raw = path.read_text(encoding="utf-8")
        if not raw.strip():
            return InteractionDataset.from_pairs([], [], m, n)
        try:
            arr = np.loadtxt(io.StringIO(raw), delimiter=",", dtype=np.int64, ndmin=2)
        except ValueError as exc:
            raise ParseError(str(exc), source=str(path)) from None
        return InteractionDataset.from_pairs(arr[:, 0], arr[:, 1], m, n)

    train, test = read("train.csv"), read("test.csv")
    evaluable = np.flatnonzero((train.degree() > 0) & (test.degree() > 0))
    return DataSplit(train, test, evaluable)
