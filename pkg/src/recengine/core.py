"""Canonical data types: interactions, datasets, the sparse rating matrix and
top-k recommendation lists.

Datasets and matrices are immutable once built. Every subset of a dataset
(train/test splits, bootstrap samples, folds) keeps the parent's id maps so
dense indices stay aligned across all derived objects.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, DuplicateInteraction, EmptyDataset, InvalidK

DEFAULT_SCALE = (1.0, 5.0)


@dataclass(frozen=True)
class Interaction:
    user_id: int
    item_id: int
    rating: float
    timestamp: int = 0


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class RatingDataset:
    """Ordered explicit-feedback interactions with dense id remappings.

    ``user_ids[d]`` is the raw id of dense user ``d`` (likewise for items).
    When not given, the maps are the sorted distinct raw ids present.
    A ``(user, item)`` pair may appear at most once.
    """

    def __init__(
        self,
        raw_users: Sequence[int] | np.ndarray,
        raw_items: Sequence[int] | np.ndarray,
        ratings: Sequence[float] | np.ndarray,
        timestamps: Sequence[int] | np.ndarray | None = None,
        rating_scale: tuple[float, float] = DEFAULT_SCALE,
        user_ids: np.ndarray | None = None,
        item_ids: np.ndarray | None = None,
    ):
        raw_users = np.asarray(raw_users, dtype=np.int64).reshape(-1)
        raw_items = np.asarray(raw_items, dtype=np.int64).reshape(-1)
        ratings = np.asarray(ratings, dtype=np.float64).reshape(-1)
        if timestamps is None:
            timestamps = np.zeros(len(raw_users), dtype=np.int64)
        timestamps = np.asarray(timestamps, dtype=np.int64).reshape(-1)
        n = len(raw_users)
        if not (len(raw_items) == len(ratings) == len(timestamps) == n):
            raise DimensionError("interaction field arrays differ in length")

        lo, hi = float(rating_scale[0]), float(rating_scale[1])
        if not lo < hi:
            raise ValueError(f"rating scale must satisfy min < max, got {rating_scale}")
        if n and (ratings.min() < lo or ratings.max() > hi or not np.all(np.isfinite(ratings))):
            bad = ratings[(ratings < lo) | (ratings > hi) | ~np.isfinite(ratings)][0]
            raise ValueError(f"rating {bad} outside scale [{lo}, {hi}]")
        if n and timestamps.min() < 0:
            raise ValueError("timestamps must be >= 0")

        self.user_ids = _frozen(np.unique(raw_users) if user_ids is None else np.asarray(user_ids, np.int64))
        self.item_ids = _frozen(np.unique(raw_items) if item_ids is None else np.asarray(item_ids, np.int64))
        users = np.searchsorted(self.user_ids, raw_users)
        items = np.searchsorted(self.item_ids, raw_items)
        if n and (
            users.max() >= len(self.user_ids)
            or items.max() >= len(self.item_ids)
            or np.any(self.user_ids[users] != raw_users)
            or np.any(self.item_ids[items] != raw_items)
        ):
            raise KeyError("interaction references an id missing from the supplied index")

        key = users * np.int64(max(len(self.item_ids), 1)) + items
        uniq, first, counts = np.unique(key, return_index=True, return_counts=True)
        if len(uniq) != n:
            j = first[np.argmax(counts > 1)]
            raise DuplicateInteraction(f"duplicate interaction for user {raw_users[j]}, item {raw_items[j]}")

        self.raw_users = _frozen(raw_users)
        self.raw_items = _frozen(raw_items)
        self.users = _frozen(users.astype(np.int64))
        self.items = _frozen(items.astype(np.int64))
        self.ratings = _frozen(ratings)
        self.timestamps = _frozen(timestamps)
        self.rating_scale = (lo, hi)

    @classmethod
    def from_interactions(
        cls, interactions: Iterable[Interaction], rating_scale: tuple[float, float] = DEFAULT_SCALE
    ) -> "RatingDataset":
        rows = list(interactions)
        return cls(
            [r.user_id for r in rows],
            [r.item_id for r in rows],
            [r.rating for r in rows],
            [r.timestamp for r in rows],
            rating_scale=rating_scale,
        )

    def __len__(self) -> int:
        return len(self.ratings)

    def __repr__(self) -> str:
        return f"RatingDataset(n={len(self)}, users={self.n_users}, items={self.n_items})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatingDataset):
            return NotImplemented
        return (
            self.rating_scale == other.rating_scale
            and np.array_equal(self.user_ids, other.user_ids)
            and np.array_equal(self.item_ids, other.item_ids)
            and np.array_equal(self.raw_users, other.raw_users)
            and np.array_equal(self.raw_items, other.raw_items)
            and np.array_equal(self.ratings, other.ratings)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @cached_property
    def user_index(self) -> dict[int, int]:
        return {int(u): d for d, u in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[int, int]:
        return {int(i): d for d, i in enumerate(self.item_ids)}

    @property
    def interactions(self) -> tuple[Interaction, ...]:
        return tuple(self)

    def __iter__(self) -> Iterator[Interaction]:
        for u, i, r, t in zip(self.raw_users.tolist(), self.raw_items.tolist(),
                              self.ratings.tolist(), self.timestamps.tolist()):
            yield Interaction(u, i, r, t)

    def keys(self) -> np.ndarray:
        """Integer key per interaction, unique within the index space."""
        return self.users * np.int64(max(self.n_items, 1)) + self.items

    def subset(self, indices: np.ndarray | Sequence[int]) -> "RatingDataset":
        """Rows at ``indices`` (in the given order), sharing this dataset's id maps."""
        idx = np.asarray(indices, dtype=np.int64)
        return RatingDataset(
            self.raw_users[idx], self.raw_items[idx], self.ratings[idx], self.timestamps[idx],
            rating_scale=self.rating_scale, user_ids=self.user_ids, item_ids=self.item_ids,
        )

    def with_ratings(self, ratings: np.ndarray, rating_scale: tuple[float, float] | None = None) -> "RatingDataset":
        return RatingDataset(
            self.raw_users, self.raw_items, ratings, self.timestamps,
            rating_scale=rating_scale or self.rating_scale,
            user_ids=self.user_ids, item_ids=self.item_ids,
        )

    def user_counts(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n_users)

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.items, minlength=self.n_items)


class SparseRatingMatrix:
    """The user-item matrix R: stored entries only, with row and column access.

    Entries are kept in row-major order. Explicit zeros are real entries
    (centered ratings can be exactly 0), so nothing is ever eliminated.
    """

    def __init__(self, rows, cols, values, n_users: int, n_items: int,
                 rating_scale: tuple[float, float] = DEFAULT_SCALE):
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if not (len(rows) == len(cols) == len(values)):
            raise DimensionError("rows, cols and values differ in length")
        if len(rows) and (rows.min() < 0 or rows.max() >= n_users or cols.min() < 0 or cols.max() >= n_items):
            raise DimensionError("entry index outside matrix shape")
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if len(rows) > 1:
            dup = (rows[1:] == rows[:-1]) & (cols[1:] == cols[:-1])
            if dup.any():
                j = int(np.argmax(dup))
                raise DuplicateInteraction(f"duplicate entry ({rows[j]}, {cols[j]})")
        self.n_users = int(n_users)
        self.n_items = int(n_items)
        self.rating_scale = (float(rating_scale[0]), float(rating_scale[1]))
        self.rows = _frozen(rows)
        self.cols = _frozen(cols)
        self.values = _frozen(values)
        self.indptr = _frozen(np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n_users))]).astype(np.int64))
        corder = np.lexsort((rows, cols))
        self._col_order = _frozen(corder)
        self.col_indptr = _frozen(np.concatenate([[0], np.cumsum(np.bincount(cols, minlength=n_items))]).astype(np.int64))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_users, self.n_items)

    @property
    def nnz(self) -> int:
        return len(self.values)

    def __repr__(self) -> str:
        return f"SparseRatingMatrix({self.n_users}x{self.n_items}, nnz={self.nnz})"

    def row(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        s, e = self.indptr[u], self.indptr[u + 1]
        return self.cols[s:e], self.values[s:e]

    def col(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        sel = self._col_order[self.col_indptr[i]:self.col_indptr[i + 1]]
        return self.rows[sel], self.values[sel]

    def get(self, u: int, i: int, default: float | None = None) -> float | None:
        items, vals = self.row(u)
        j = np.searchsorted(items, i)
        if j < len(items) and items[j] == i:
            return float(vals[j])
        return default

    def row_counts(self) -> np.ndarray:
        return np.diff(self.indptr)

    def col_counts(self) -> np.ndarray:
        return np.diff(self.col_indptr)

    def entries(self) -> Iterator[tuple[int, int, float]]:
        yield from zip(self.rows.tolist(), self.cols.tolist(), self.values.tolist())

    def with_values(self, values: np.ndarray) -> "SparseRatingMatrix":
        """Same sparsity structure, new stored values (row-major order)."""
        return SparseRatingMatrix(self.rows, self.cols, values, self.n_users, self.n_items, self.rating_scale)

    def transpose(self) -> "SparseRatingMatrix":
        return SparseRatingMatrix(self.cols, self.rows, self.values, self.n_items, self.n_users, self.rating_scale)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.cols, self.indptr), shape=self.shape)

    def to_dense(self, fill: float = 0.0) -> np.ndarray:
        out = np.full(self.shape, fill)
        out[self.rows, self.cols] = self.values
        return out


def build_matrix(dataset: RatingDataset) -> SparseRatingMatrix:
    if len(dataset) == 0:
        raise EmptyDataset("cannot build a rating matrix from an empty dataset")
    return SparseRatingMatrix(dataset.users, dataset.items, dataset.ratings,
                              dataset.n_users, dataset.n_items, dataset.rating_scale)


def global_mean(dataset: RatingDataset) -> float:
    if len(dataset) == 0:
        raise EmptyDataset("global mean of an empty dataset")
    return float(np.mean(dataset.ratings))


@dataclass(frozen=True)
class RecommendationList:
    user_id: int | None
    items: tuple[tuple[int, float], ...]

    def item_ids(self) -> list[int]:
        return [i for i, _ in self.items]

    def __len__(self) -> int:
        return len(self.items)


def top_k(scores: Mapping[int, float], k: int, exclude: Iterable[int] = (),
          user_id: int | None = None) -> RecommendationList:
    """Highest-scoring ``k`` items, ties broken by ascending item id."""
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    skip = set(exclude)
    ranked = sorted(((i, float(s)) for i, s in scores.items() if i not in skip),
                    key=lambda p: (-p[1], p[0]))
    return RecommendationList(user_id, tuple(ranked[:k]))


def top_k_indices(scores: np.ndarray, k: int, exclude: np.ndarray | None = None) -> np.ndarray:
    """Array form of :func:`top_k` over dense item indices."""
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    scores = np.asarray(scores, dtype=np.float64)
    candidates = np.arange(len(scores))
    if exclude is not None and len(exclude):
        mask = np.ones(len(scores), dtype=bool)
        mask[np.asarray(exclude, dtype=np.int64)] = False
        candidates = candidates[mask]
    # lexsort: last key primary -> descending score, then ascending index
    order = np.lexsort((candidates, -scores[candidates]))
    return candidates[order[:k]]


def clamp(x, scale: tuple[float, float]):
    return np.clip(x, scale[0], scale[1])


@dataclass(frozen=True)
class GlobalMeanModel:
    """Predicts the training mean for every pair; the reference baseline."""

    mean: float
    n_users: int
    n_items: int
    rating_scale: tuple[float, float] = DEFAULT_SCALE

    @classmethod
    def fit(cls, train: RatingDataset) -> "GlobalMeanModel":
        return cls(global_mean(train), train.n_users, train.n_items, tuple(train.rating_scale))

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0])

    def predict_many(self, users, items) -> np.ndarray:
        return np.full(np.asarray(users).shape, float(clamp(self.mean, self.rating_scale)))

    def score_items(self, user: int) -> np.ndarray:
        return np.full(self.n_items, float(clamp(self.mean, self.rating_scale)))
