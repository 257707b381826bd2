"""Neighborhood collaborative filtering (user- and item-based) and
content-based filtering over item feature vectors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Mapping

import numpy as np
import scipy.sparse as sp

from .core import RatingDataset, SparseRatingMatrix, clamp
from .errors import ColdStart, DimensionError, EmptyDataset
from .ingest import ItemFeatures
from .preprocess import axis_means

Axis = Literal["user", "item"]


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


@dataclass(frozen=True)
class SimilarityMatrix:
    """Dense entity-by-entity similarity scores.

    Cosine-based matrices are symmetric with a unit diagonal for entities
    with a nonzero vector; random-walk matrices are row-normalized per seed
    and need not be symmetric.
    """

    axis: str
    values: np.ndarray

    def __getitem__(self, key):
        return self.values[key]

    @property
    def size(self) -> int:
        return self.values.shape[0]

    def is_symmetric(self) -> bool:
        return bool(np.array_equal(self.values, self.values.T))


def _symmetrize_upper(m: np.ndarray) -> np.ndarray:
    upper = np.triu(m)
    return upper + np.triu(m, 1).T


def centered_cosine(entity_matrix: SparseRatingMatrix, shrink: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Adjusted cosine between rows over co-rated columns.

    Each row is centered on its own mean; for rows a, b the numerator sums
    c_a*c_b over columns both rated, and each norm is taken over those same
    co-rated columns. ``shrink`` is added to the denominator. Returns the
    similarity matrix and the row means.
    """
    n, m = entity_matrix.shape
    means = axis_means(entity_matrix, "user")
    centered = entity_matrix.values - means[entity_matrix.rows]
    c = sp.csr_matrix((centered, entity_matrix.cols, entity_matrix.indptr), shape=(n, m))
    b = sp.csr_matrix((np.ones_like(centered), entity_matrix.cols, entity_matrix.indptr), shape=(n, m))
    c2 = sp.csr_matrix((centered * centered, entity_matrix.cols, entity_matrix.indptr), shape=(n, m))
    num = (c @ c.T).toarray()
    sq = (c2 @ b.T).toarray()  # sq[a, b] = sum over co-rated of c_a^2
    den = np.sqrt(sq * sq.T)
    sim = np.divide(num, den + shrink, out=np.zeros_like(num), where=den > 0)
    return _symmetrize_upper(sim), means


def neighbor_lists(sim: np.ndarray, size: int) -> np.ndarray:
    """Top-``size`` positive-similarity neighbors per row, self excluded.

    Rows are padded with -1. Order: similarity descending, index ascending.
    """
    n = sim.shape[0]
    out = np.full((n, size), -1, dtype=np.int64)
    for a in range(n):
        s = sim[a]
        cand = np.flatnonzero(s > 0)
        cand = cand[cand != a]
        if cand.size == 0:
            continue
        order = np.lexsort((cand, -s[cand]))[:size]
        out[a, :len(order)] = cand[order]
    return out


@dataclass(frozen=True)
class KNNModel:
    """Fitted neighborhood model.

    In ``user`` mode entities are users and neighbors are other users; in
    ``item`` mode the roles swap and the fitted state equals user mode on
    the transposed matrix.
    """

    mode: str
    similarity: SimilarityMatrix
    neighbors: np.ndarray
    entity_means: np.ndarray
    entity_matrix: SparseRatingMatrix
    rating_scale: tuple[float, float]
    shrink: float = 0.0

    def _entity_other(self, user: int, item: int) -> tuple[int, int]:
        return (user, item) if self.mode == "user" else (item, user)

    def is_known(self, user: int, item: int) -> bool:
        e, o = self._entity_other(user, item)
        m = self.entity_matrix
        return 0 <= e < m.n_users and 0 <= o < m.n_items and m.indptr[e + 1] > m.indptr[e] \
            and m.col_indptr[o + 1] > m.col_indptr[o]

    def predict(self, user: int, item: int) -> float:
        return float(clamp(self.predict_raw(user, item), self.rating_scale))

    def predict_raw(self, user: int, item: int) -> float:
        if not self.is_known(user, item):
            raise ColdStart(f"no training history for user {user} / item {item}")
        e, o = self._entity_other(user, item)
        raters, vals = self.entity_matrix.col(o)
        nbrs = self.neighbors[e]
        nbrs = nbrs[nbrs >= 0]
        common, in_n, in_r = np.intersect1d(nbrs, raters, assume_unique=True, return_indices=True)
        if common.size == 0:
            return float(self.entity_means[e])
        s = self.similarity.values[e, common]
        dev = vals[in_r] - self.entity_means[common]
        return float(self.entity_means[e] + np.dot(s, dev) / np.sum(np.abs(s)))

    def predict_many(self, users, items) -> np.ndarray:
        return np.array([self.predict(int(u), int(i)) for u, i in zip(users, items)], dtype=np.float64)

    def score_items(self, user: int) -> np.ndarray:
        """Ranking scores over every item: similarity-weighted rating sums.

        Item mode scores item i by the sum over the user's rated items j that
        list i among their neighbors of ``sim(i, j) * r_uj``; user mode sums
        ``sim(u, v) * r_vi`` over the user's neighbors v. Unlike
        :meth:`predict`, these sums reward items with broad neighbor support.
        """
        m = self.entity_matrix
        if self.mode == "item":
            n_items = m.n_users
            scores = np.zeros(n_items)
            rated, r = self._user_row(user)
            if rated.size == 0:
                raise ColdStart(f"user {user} has no training history")
            nb = self.neighbors[rated]
            w = self.similarity.values[rated[:, None], np.where(nb >= 0, nb, 0)] * (nb >= 0)
            np.add.at(scores, np.where(nb >= 0, nb, 0).ravel(), (w * r[:, None]).ravel())
            return scores
        nbrs = self.neighbors[user]
        nbrs = nbrs[nbrs >= 0]
        scores = np.zeros(m.n_items)
        if m.indptr[user + 1] == m.indptr[user]:
            raise ColdStart(f"user {user} has no training history")
        for v in nbrs:
            items, vals = m.row(v)
            scores[items] += self.similarity.values[user, v] * vals
        return scores

    def _user_row(self, user: int) -> tuple[np.ndarray, np.ndarray]:
        # item mode stores items as rows; a user's ratings are a column
        return self.entity_matrix.col(user)


def knn_fit(matrix: SparseRatingMatrix, mode: Axis = "user", neighborhood_size: int = 50,
            shrink: float = 0.0) -> KNNModel:
    """Fit user- or item-based kNN with adjusted cosine on co-rated entries.

    Entities with no co-rated overlap get similarity 0 and are never
    neighbors. ``shrink`` > 0 damps similarities backed by little evidence.
    """
    if matrix.nnz == 0:
        raise EmptyDataset("empty rating matrix")
    if neighborhood_size < 1:
        raise ValueError("neighborhood_size must be >= 1")
    if mode == "user":
        em = matrix
    elif mode == "item":
        em = matrix.transpose()
    else:
        raise ValueError(f"mode must be 'user' or 'item', got {mode!r}")
    sim, means = centered_cosine(em, shrink=shrink)
    return KNNModel(
        mode=mode,
        similarity=SimilarityMatrix(mode, sim),
        neighbors=neighbor_lists(sim, neighborhood_size),
        entity_means=means,
        entity_matrix=em,
        rating_scale=matrix.rating_scale,
        shrink=shrink,
    )


def knn_predict(model: KNNModel, user: int, item: int) -> float:
    """Similarity-weighted mean of neighbors' centered ratings, re-centered
    on the target and clamped; falls back to the target's mean."""
    return model.predict(user, item)


@dataclass(frozen=True)
class UserProfile:
    user_id: int
    profile_vector: np.ndarray
    threshold: float


def build_user_profile(dataset: RatingDataset, catalog: Mapping[int, ItemFeatures], user_id: int,
                       like_threshold: float = 4.0) -> UserProfile:
    """Mean feature vector of the items ``user_id`` rated at or above the threshold."""
    sel = (dataset.raw_users == user_id) & (dataset.ratings >= like_threshold)
    liked = [catalog[i].feature_vector for i in dataset.raw_items[sel].tolist() if i in catalog]
    if not liked:
        raise ColdStart(f"user {user_id} has no items rated >= {like_threshold}")
    return UserProfile(user_id, np.mean(liked, axis=0), like_threshold)


def cbf_predict(profile: UserProfile, item: ItemFeatures) -> float:
    vec = np.asarray(item.feature_vector, dtype=np.float64)
    if vec.shape != profile.profile_vector.shape:
        raise DimensionError("item features and profile differ in length")
    return cosine_similarity(profile.profile_vector, vec)
