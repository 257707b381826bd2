"""Item co-consumption graphs with random-walk similarity, the factorized
sparse-similarity model (SLIM variant) and the linear feature model."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import RatingDataset, SparseRatingMatrix, clamp
from .errors import (ColdStart, DimensionError, DivergenceError, EmptyDataset, InvalidConfig,
                     SingularSystem)
from .similarity import SimilarityMatrix, _symmetrize_upper


@dataclass(frozen=True)
class InteractionGraph:
    """Undirected item graph in CSR form; edge weight = co-liking users."""

    n_nodes: int
    indptr: np.ndarray
    neighbors: np.ndarray
    weights: np.ndarray

    def degree(self, node: int) -> int:
        return int(self.indptr[node + 1] - self.indptr[node])

    def edges(self) -> dict[tuple[int, int], int]:
        out = {}
        for a in range(self.n_nodes):
            for b, w in zip(self.neighbors[self.indptr[a]:self.indptr[a + 1]].tolist(),
                            self.weights[self.indptr[a]:self.indptr[a + 1]].tolist()):
                if a < b:
                    out[(a, b)] = int(w)
        return out

    @property
    def n_edges(self) -> int:
        return len(self.neighbors) // 2

    @classmethod
    def from_edges(cls, n_nodes: int, edges: dict[tuple[int, int], float]) -> "InteractionGraph":
        src, dst, w = [], [], []
        for (a, b), wt in edges.items():
            if a == b:
                raise ValueError("self-loops are not allowed")
            src += [a, b]
            dst += [b, a]
            w += [wt, wt]
        src, dst, w = np.array(src, np.int64), np.array(dst, np.int64), np.array(w, np.float64)
        order = np.lexsort((dst, src))
        indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n_nodes))]).astype(np.int64)
        return cls(n_nodes, indptr, dst[order], w[order])


def build_graph(dataset: RatingDataset, like_threshold: float = 4.0) -> InteractionGraph:
    """Connect items liked by the same user; weight counts such users."""
    if len(dataset) == 0:
        raise EmptyDataset("empty dataset")
    liked = dataset.ratings >= like_threshold
    users, items = dataset.users[liked], dataset.items[liked]
    n = dataset.n_items
    if users.size == 0:
        return InteractionGraph(n, np.zeros(n + 1, np.int64), np.zeros(0, np.int64), np.zeros(0))
    import scipy.sparse as sp

    B = sp.csr_matrix((np.ones(users.size), (users, items)), shape=(dataset.n_users, n))
    co = (B.T @ B).tocoo()
    keep = co.row != co.col
    rows, cols, w = co.row[keep].astype(np.int64), co.col[keep].astype(np.int64), co.data[keep]
    order = np.lexsort((cols, rows))
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))]).astype(np.int64)
    return InteractionGraph(n, indptr, cols[order], w[order])


@dataclass(frozen=True)
class WalkConfig:
    walk_length: int = 5
    walks_per_seed: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.walk_length < 2:
            raise InvalidConfig("walk_length must be >= 2")
        if self.walks_per_seed < 1:
            raise InvalidConfig("walks_per_seed must be >= 1")


def _walks_from(graph: InteractionGraph, start: int, config: WalkConfig) -> np.ndarray:
    """Visit matrix (walks x nodes) of ``walks_per_seed`` walks from ``start``.

    ``walk_length`` counts steps taken; each step moves to a neighbor with
    probability proportional to edge weight.
    """
    rng = np.random.default_rng([config.seed, start])
    cum = np.cumsum(graph.weights)
    row_start = np.concatenate([[0.0], cum])[graph.indptr[:-1]]
    row_total = np.concatenate([[0.0], cum])[graph.indptr[1:]] - row_start
    n_walks = config.walks_per_seed
    visited = np.zeros((n_walks, graph.n_nodes), dtype=bool)
    cur = np.full(n_walks, start, dtype=np.int64)
    walk_ids = np.arange(n_walks)
    for _ in range(config.walk_length):
        u = rng.random(n_walks)
        target = row_start[cur] + u * row_total[cur]
        pos = np.searchsorted(cum, target, side="right")
        # guard the upper edge of each row against rounding
        pos = np.minimum(pos, graph.indptr[cur + 1] - 1)
        cur = graph.neighbors[pos]
        visited[walk_ids, cur] = True
    return visited


def rw_similarity(graph: InteractionGraph, config: WalkConfig = WalkConfig()) -> SimilarityMatrix:
    """Sim(i, j) = fraction of walks seeded at i that visit j (i != j).

    Each seed draws from its own generator keyed on ``(config.seed, i)``, so
    rows are reproducible independently of one another.
    """
    n = graph.n_nodes
    sim = np.zeros((n, n))
    for i in range(n):
        if graph.degree(i) == 0:
            continue
        visited = _walks_from(graph, i, config)
        row = visited.sum(axis=0) / config.walks_per_seed
        row[i] = 0.0
        sim[i] = row
    return SimilarityMatrix("item", sim)


def compute_S(matrix: SparseRatingMatrix) -> np.ndarray:
    """Cosine similarity between item columns of R, with a unit diagonal."""
    if matrix.nnz == 0:
        raise EmptyDataset("empty rating matrix")
    A = matrix.to_scipy()
    gram = (A.T @ A).toarray()
    norms = np.sqrt(np.diag(gram))
    den = np.outer(norms, norms)
    S = np.divide(gram, den, out=np.zeros_like(gram), where=den > 0)
    S = _symmetrize_upper(S)
    np.fill_diagonal(S, 1.0)
    return S


@dataclass(frozen=True)
class SlimConfig:
    max_iters: int = 500
    tol: float = 1e-10
    step: float = 1.0
    seed: int = 0
    init_std: float = 0.1

    def __post_init__(self):
        if self.max_iters < 1:
            raise InvalidConfig("max_iters must be >= 1")


@dataclass(frozen=True)
class SlimModel:
    W: np.ndarray
    H: np.ndarray
    reg: float
    objective_history: tuple[float, ...] = ()
    rating_scale: tuple[float, float] = (1.0, 5.0)

    @property
    def S_hat(self) -> np.ndarray:
        return self.W.T @ self.H

    @property
    def sparsity(self) -> float:
        """Fraction of exactly-zero entries across W and H."""
        total = self.W.size + self.H.size
        return float((np.sum(self.W == 0) + np.sum(self.H == 0)) / total)


def slim_objective(S: np.ndarray, W: np.ndarray, H: np.ndarray, reg: float) -> float:
    r = S - W.T @ H
    return float(np.sum(r * r) + reg * (np.abs(W).sum() + np.abs(H).sum()))


def _soft(x: np.ndarray, t: float) -> np.ndarray:
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def slim_fit(S: np.ndarray, rank: int, reg: float, config: SlimConfig = SlimConfig(),
             rating_scale=(1.0, 5.0)) -> SlimModel:
    """Minimize ``|S - W^T H|_F^2 + reg (|W|_1 + |H|_1)`` by proximal gradient.

    ``W`` and ``H`` are ``rank x N``. Each iteration takes a joint gradient
    step on the smooth part followed by soft-thresholding, with the step
    halved until the usual sufficient-decrease bound holds, so the objective
    never increases.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionError(f"S must be square, got {S.shape}")
    if rank < 1:
        raise InvalidConfig("rank must be >= 1")
    n = S.shape[0]
    rng = np.random.default_rng(config.seed)
    W = rng.normal(0.0, config.init_std, size=(rank, n))
    H = rng.normal(0.0, config.init_std, size=(rank, n))
    F = slim_objective(S, W, H, reg)
    history = [F]
    step = config.step
    for it in range(1, config.max_iters + 1):
        R = S - W.T @ H
        f = float(np.sum(R * R))
        gW = -2.0 * H @ R.T
        gH = -2.0 * W @ R
        while True:
            W_new = _soft(W - step * gW, step * reg)
            H_new = _soft(H - step * gH, step * reg)
            dW, dH = W_new - W, H_new - H
            R_new = S - W_new.T @ H_new
            f_new = float(np.sum(R_new * R_new))
            bound = f + np.sum(gW * dW) + np.sum(gH * dH) + (np.sum(dW * dW) + np.sum(dH * dH)) / (2 * step)
            F_new = f_new + reg * (np.abs(W_new).sum() + np.abs(H_new).sum())
            if f_new <= bound and F_new <= F:
                break
            step *= 0.5
            if step < 1e-20:
                W_new, H_new, F_new = W, H, F
                break
        if not np.isfinite(F_new):
            raise DivergenceError(f"SLIM objective non-finite at iteration {it}", epoch=it)
        converged = F - F_new <= config.tol * max(1.0, F)
        W, H, F = W_new, H_new, F_new
        history.append(F)
        if converged:
            break
        step *= 2.0  # let the step grow back after successful iterations
    return SlimModel(W, H, float(reg), tuple(history), tuple(rating_scale))


def slim_predict(model: SlimModel, matrix: SparseRatingMatrix, user: int, item: int) -> float:
    """Normalized weighted sum of the user's ratings through the learned
    similarity ``S_hat``; the user's mean when all weights vanish."""
    if not 0 <= user < matrix.n_users:
        raise ColdStart(f"user {user} unknown")
    items, vals = matrix.row(user)
    if items.size == 0:
        raise ColdStart(f"user {user} has no ratings")
    s = model.W[:, item] @ model.H[:, items]
    den = np.sum(np.abs(s))
    if den == 0:
        return float(clamp(np.mean(vals), model.rating_scale))
    return float(clamp(np.dot(s, vals) / den, model.rating_scale))


@dataclass(frozen=True)
class SlimRecommender:
    """Binds a fitted SLIM model to the training matrix it predicts from."""
    model: SlimModel
    matrix: SparseRatingMatrix

    def predict(self, user: int, item: int) -> float:
        return slim_predict(self.model, self.matrix, user, item)

    def predict_many(self, users, items) -> np.ndarray:
        return np.array([self.predict(int(u), int(i)) for u, i in zip(users, items)])


# ---------------------------------------------------------------------------
# linear model


DEFAULT_FEATURES = ("user_mean", "item_mean", "user_count", "item_count")


@dataclass(frozen=True)
class LinearModel:
    w0: float
    weights: np.ndarray
    feature_names: tuple[str, ...] = ()
    reg: float = 0.0
    rating_scale: tuple[float, float] = (1.0, 5.0)


def linear_fit(X, y, reg: float = 0.0, feature_names: Sequence[str] = (),
               rating_scale=(1.0, 5.0)) -> LinearModel:
    """Ridge least squares via the normal equations; the bias is unpenalized."""
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64).reshape(len(y), -1)
    if y.size == 0:
        raise EmptyDataset("no training rows")
    A = np.column_stack([np.ones(len(y)), X])
    G = A.T @ A
    G[1:, 1:] += reg * np.eye(X.shape[1])
    if np.linalg.matrix_rank(G) < G.shape[0]:
        raise SingularSystem("normal equations are singular; add regularization or drop collinear features")
    coef = np.linalg.solve(G, A.T @ y)
    names = tuple(feature_names) or tuple(f"F{j + 1}" for j in range(X.shape[1]))
    return LinearModel(float(coef[0]), coef[1:], names, float(reg), tuple(rating_scale))


def linear_predict(model: LinearModel, features) -> float:
    f = np.asarray(features, dtype=np.float64).reshape(-1)
    if f.shape[0] != model.weights.shape[0]:
        raise DimensionError(f"expected {model.weights.shape[0]} features, got {f.shape[0]}")
    return float(clamp(model.w0 + model.weights @ f, model.rating_scale))


@dataclass(frozen=True)
class InteractionFeatures:
    """Per-user and per-item statistics of a training set, for the linear model."""
    user_mean: np.ndarray
    item_mean: np.ndarray
    user_count: np.ndarray
    item_count: np.ndarray
    names: tuple[str, ...] = DEFAULT_FEATURES

    @classmethod
    def fit(cls, train: RatingDataset) -> "InteractionFeatures":
        g = float(np.mean(train.ratings))
        uc = np.bincount(train.users, minlength=train.n_users).astype(np.float64)
        ic = np.bincount(train.items, minlength=train.n_items).astype(np.float64)
        us = np.bincount(train.users, weights=train.ratings, minlength=train.n_users)
        is_ = np.bincount(train.items, weights=train.ratings, minlength=train.n_items)
        return cls(np.divide(us, uc, out=np.full_like(us, g), where=uc > 0),
                   np.divide(is_, ic, out=np.full_like(is_, g), where=ic > 0), uc, ic)

    def transform(self, users, items) -> np.ndarray:
        users, items = np.asarray(users), np.asarray(items)
        cols = {"user_mean": self.user_mean[users], "item_mean": self.item_mean[items],
                "user_count": self.user_count[users], "item_count": self.item_count[items]}
        return np.column_stack([cols[n] for n in self.names])


@dataclass(frozen=True)
class LinearRecommender:
    model: LinearModel
    features: InteractionFeatures = field(repr=False)

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0])

    def predict_many(self, users, items) -> np.ndarray:
        X = self.features.transform(users, items)
        return clamp(self.model.w0 + X @ self.model.weights, self.model.rating_scale)


def fit_linear_recommender(train: RatingDataset, reg: float = 1.0) -> LinearRecommender:
    feats = InteractionFeatures.fit(train)
    X = feats.transform(train.users, train.items)
    model = linear_fit(X, train.ratings, reg, feats.names, train.rating_scale)
    return LinearRecommender(model, feats)
