"""Latent-factor models: matrix factorization (SGD or ALS), CP tensor
factorization over (user, item, context), and order-2 factorization machines.

All three minimize squared error over observed entries plus an L2 penalty on
the whole parameter matrices::

    sum_obs (r - offset - model(u, i, ...))**2 + reg * (sum of squared params)

Stochastic updates split the penalty of a parameter row evenly over the
observations that touch it (``reg / count`` per touch), so one epoch of
per-observation gradients adds up to the gradient of the full objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from numba import njit

from .core import RatingDataset, SparseRatingMatrix, build_matrix, clamp
from .errors import ColdStart, DimensionError, DivergenceError, EmptyDataset, InvalidConfig, InvalidK, UnknownCategory

DIVERGENCE_FACTOR = 1e6


@dataclass(frozen=True)
class TrainConfig:
    factors: int = 10
    learning_rate: float = 0.01
    reg: float = 0.0
    epochs: int = 20
    batch_size: int = 1
    seed: int = 0
    optimizer: Literal["sgd", "als"] = "sgd"
    center: Literal["none", "global", "user", "item"] = "none"
    init_std: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidConfig(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise InvalidConfig(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise InvalidConfig(f"batch_size must be >= 1, got {self.batch_size}")
        if self.factors < 1:
            raise InvalidK(f"factors must be >= 1, got {self.factors}")
        if self.reg < 0:
            raise InvalidConfig(f"reg must be >= 0, got {self.reg}")
        if self.optimizer not in ("sgd", "als"):
            raise InvalidConfig(f"optimizer must be 'sgd' or 'als', got {self.optimizer!r}")
        if self.center not in ("none", "global", "user", "item"):
            raise InvalidConfig(f"unknown center mode {self.center!r}")

    @property
    def std(self) -> float:
        return self.init_std if self.init_std is not None else 0.1 / math.sqrt(self.factors)


def _inv_counts(idx: np.ndarray, n: int) -> np.ndarray:
    c = np.bincount(idx, minlength=n).astype(np.float64)
    return np.divide(1.0, c, out=np.zeros(n), where=c > 0)


def _check_loss(loss: float, initial: float, epoch: int, what: str) -> None:
    if not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * max(initial, 1e-12):
        raise DivergenceError(f"{what} diverged at epoch {epoch} (loss={loss})", epoch=epoch)


# ---------------------------------------------------------------------------
# matrix factorization


@dataclass(frozen=True)
class MFModel:
    U: np.ndarray
    V: np.ndarray
    reg: float = 0.0
    rating_scale: tuple[float, float] = (1.0, 5.0)
    global_offset: float = 0.0
    user_offsets: np.ndarray | None = None
    item_offsets: np.ndarray | None = None
    loss_history: tuple[float, ...] = ()

    @property
    def k(self) -> int:
        return self.U.shape[1]

    @property
    def n_users(self) -> int:
        return self.U.shape[0]

    @property
    def n_items(self) -> int:
        return self.V.shape[0]

    def offsets(self, users, items) -> np.ndarray:
        users = np.asarray(users)
        out = np.full(users.shape, self.global_offset, dtype=np.float64)
        if self.user_offsets is not None:
            out = out + self.user_offsets[users]
        if self.item_offsets is not None:
            out = out + self.item_offsets[np.asarray(items)]
        return out

    def raw(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        return self.offsets(users, items) + np.einsum("ij,ij->i", self.U[users], self.V[items])

    def _check(self, users, items) -> None:
        users, items = np.asarray(users), np.asarray(items)
        if users.size and (users.min() < 0 or users.max() >= self.n_users
                           or items.min() < 0 or items.max() >= self.n_items):
            raise ColdStart("user or item index outside the trained model")

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0])

    def predict_many(self, users, items) -> np.ndarray:
        self._check(users, items)
        return clamp(self.raw(users, items), self.rating_scale)

    def score_items(self, user: int) -> np.ndarray:
        self._check([user], [0])
        items = np.arange(self.n_items)
        return clamp(self.raw(np.full(self.n_items, user), items), self.rating_scale)


def _center_offsets(users, items, ratings, n_users, n_items, mode):
    if mode == "none":
        return 0.0, None, None
    g = float(np.mean(ratings))
    if mode == "global":
        return g, None, None
    idx, n = (users, n_users) if mode == "user" else (items, n_items)
    sums = np.bincount(idx, weights=ratings, minlength=n)
    cnt = np.bincount(idx, minlength=n)
    dev = np.divide(sums, cnt, out=np.full(n, g), where=cnt > 0) - g
    return (g, dev, None) if mode == "user" else (g, None, dev)


def mf_loss(model: MFModel, train: SparseRatingMatrix) -> float:
    """Squared error over the stored entries plus ``reg * (|U|^2 + |V|^2)``."""
    if train.shape != (model.n_users, model.n_items):
        raise DimensionError(f"matrix {train.shape} vs model {(model.n_users, model.n_items)}")
    e = train.values - model.raw(train.rows, train.cols)
    return float(e @ e + model.reg * (np.sum(model.U ** 2) + np.sum(model.V ** 2)))


def mf_gradient(model: MFModel, train: SparseRatingMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradient of :func:`mf_loss` with respect to ``U`` and ``V``."""
    e = train.values - model.raw(train.rows, train.cols)
    dU = 2 * model.reg * model.U
    dV = 2 * model.reg * model.V
    np.add.at(dU, train.rows, -2 * e[:, None] * model.V[train.cols])
    np.add.at(dV, train.cols, -2 * e[:, None] * model.U[train.rows])
    return dU, dV


@njit(cache=True)
def _mf_sgd_epoch(users, items, targets, order, U, V, lr, reg_u, reg_v, batch, gU, gV):
    n = order.shape[0]
    k = U.shape[1]
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        for t in range(start, stop):
            j = order[t]
            u = users[j]
            i = items[j]
            pred = 0.0
            for f in range(k):
                pred += U[u, f] * V[i, f]
            e = targets[j] - pred
            for f in range(k):
                gU[u, f] += -2.0 * e * V[i, f] + 2.0 * reg_u[u] * U[u, f]
                gV[i, f] += -2.0 * e * U[u, f] + 2.0 * reg_v[i] * V[i, f]
        for t in range(start, stop):
            j = order[t]
            u = users[j]
            i = items[j]
            for f in range(k):
                U[u, f] -= lr * gU[u, f]
                gU[u, f] = 0.0
                V[i, f] -= lr * gV[i, f]
                gV[i, f] = 0.0


@njit(cache=True)
def _mf_objective(users, items, targets, U, V, reg):
    total = 0.0
    k = U.shape[1]
    for j in range(users.shape[0]):
        pred = 0.0
        for f in range(k):
            pred += U[users[j], f] * V[items[j], f]
        e = targets[j] - pred
        total += e * e
    return total + reg * (np.sum(U * U) + np.sum(V * V))


def _als_half(rows_ptr, rows_idx, rows_val, other, reg, out):
    k = other.shape[1]
    eye = np.eye(k)
    for a in range(out.shape[0]):
        s, e = rows_ptr[a], rows_ptr[a + 1]
        if s == e:
            out[a] = 0.0
            continue
        M = other[rows_idx[s:e]]
        A = M.T @ M + reg * eye
        b = M.T @ rows_val[s:e]
        try:
            out[a] = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            out[a] = np.linalg.lstsq(A, b, rcond=None)[0]


@dataclass(frozen=True)
class ALSTrace:
    """Full objective after each half-step (users then items), per iteration."""
    objective: tuple[float, ...]


def fit_mf_arrays(users, items, ratings, n_users: int, n_items: int, config: TrainConfig,
                  rating_scale=(1.0, 5.0)) -> MFModel:
    """Fit MF on parallel arrays. Repeated (user, item) rows are allowed and
    count as separate observations, which is what bootstrap resamples need."""
    users = np.ascontiguousarray(users, dtype=np.int64)
    items = np.ascontiguousarray(items, dtype=np.int64)
    ratings = np.ascontiguousarray(ratings, dtype=np.float64)
    if users.size == 0:
        raise EmptyDataset("cannot fit on no observations")
    g, bu, bi = _center_offsets(users, items, ratings, n_users, n_items, config.center)
    offs = np.full(users.shape, g)
    if bu is not None:
        offs += bu[users]
    if bi is not None:
        offs += bi[items]
    targets = ratings - offs
    rng = np.random.default_rng(config.seed)
    k = config.factors
    U = rng.normal(0.0, config.std, size=(n_users, k))
    V = rng.normal(0.0, config.std, size=(n_items, k))
    initial = _mf_objective(users, items, targets, U, V, config.reg)
    history = [initial]
    if config.optimizer == "sgd":
        reg_u = config.reg * _inv_counts(users, n_users)
        reg_v = config.reg * _inv_counts(items, n_items)
        gU = np.zeros_like(U)
        gV = np.zeros_like(V)
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(users.size)
            _mf_sgd_epoch(users, items, targets, order, U, V, config.learning_rate,
                          reg_u, reg_v, config.batch_size, gU, gV)
            loss = _mf_objective(users, items, targets, U, V, config.reg)
            _check_loss(loss, initial, epoch, "matrix factorization")
            history.append(loss)
    else:
        by_user = SparseRatingMatrix(users, items, targets, n_users, n_items) if _unique(users, items, n_items) else None
        if by_user is None:
            raise InvalidConfig("ALS needs unique (user, item) observations")
        by_item = by_user.transpose()
        for epoch in range(1, config.epochs + 1):
            _als_half(by_user.indptr, by_user.cols, by_user.values, V, config.reg, U)
            history.append(_mf_objective(users, items, targets, U, V, config.reg))
            _als_half(by_item.indptr, by_item.cols, by_item.values, U, config.reg, V)
            loss = _mf_objective(users, items, targets, U, V, config.reg)
            _check_loss(loss, initial, epoch, "ALS")
            history.append(loss)
    return MFModel(U, V, config.reg, tuple(rating_scale), g, bu, bi, tuple(history))


def _unique(users, items, n_items) -> bool:
    key = users * np.int64(max(n_items, 1)) + items
    return np.unique(key).size == key.size


def mf_fit(train: SparseRatingMatrix | RatingDataset, config: TrainConfig = TrainConfig()) -> MFModel:
    """Fit U, V by SGD or ALS; deterministic for a fixed ``config.seed``.

    With ALS, ``loss_history`` holds the objective at initialization and
    after every half-step; with SGD, after every epoch.
    """
    if isinstance(train, RatingDataset):
        if len(train) == 0:
            raise EmptyDataset("empty training set")
        train = build_matrix(train)
    if train.nnz == 0:
        raise EmptyDataset("empty training matrix")
    return fit_mf_arrays(train.rows, train.cols, train.values, train.n_users, train.n_items,
                         config, train.rating_scale)


def mf_predict(model: MFModel, user: int, item: int) -> float:
    return model.predict(user, item)


# ---------------------------------------------------------------------------
# CP tensor factorization


@dataclass(frozen=True)
class TimeBinner:
    """Equal-width timestamp bins over ``[lo, hi]``; out-of-range values clip."""
    lo: float
    hi: float
    n_bins: int

    def __call__(self, timestamps) -> np.ndarray:
        ts = np.asarray(timestamps, dtype=np.float64)
        if self.hi <= self.lo:
            return np.zeros(ts.shape, dtype=np.int64)
        pos = np.floor((ts - self.lo) / (self.hi - self.lo) * self.n_bins).astype(np.int64)
        return np.clip(pos, 0, self.n_bins - 1)

    @classmethod
    def fit(cls, timestamps, n_bins: int = 8) -> "TimeBinner":
        ts = np.asarray(timestamps)
        return cls(float(ts.min()), float(ts.max()), int(n_bins))


@dataclass(frozen=True)
class TensorData:
    users: np.ndarray
    items: np.ndarray
    contexts: np.ndarray
    values: np.ndarray
    n_users: int
    n_items: int
    n_contexts: int
    rating_scale: tuple[float, float] = (1.0, 5.0)

    @classmethod
    def from_dataset(cls, dataset: RatingDataset, n_bins: int = 8,
                     binner: TimeBinner | None = None) -> tuple["TensorData", TimeBinner]:
        binner = binner or TimeBinner.fit(dataset.timestamps, n_bins)
        data = cls(dataset.users, dataset.items, binner(dataset.timestamps), dataset.ratings,
                   dataset.n_users, dataset.n_items, binner.n_bins, dataset.rating_scale)
        return data, binner


@dataclass(frozen=True)
class TensorModel:
    U: np.ndarray
    V: np.ndarray
    W: np.ndarray
    reg: float = 0.0
    rating_scale: tuple[float, float] = (1.0, 5.0)
    global_offset: float = 0.0
    binner: TimeBinner | None = None
    loss_history: tuple[float, ...] = ()

    @property
    def K(self) -> int:
        return self.U.shape[1]

    def raw(self, users, items, contexts) -> np.ndarray:
        users, items, contexts = (np.asarray(a, dtype=np.int64) for a in (users, items, contexts))
        return self.global_offset + np.einsum("ij,ij,ij->i", self.U[users], self.V[items], self.W[contexts])

    def _check(self, users, items, contexts) -> None:
        for idx, m, name in ((users, self.U, "user"), (items, self.V, "item"), (contexts, self.W, "context")):
            idx = np.asarray(idx)
            if idx.size and (idx.min() < 0 or idx.max() >= m.shape[0]):
                raise ColdStart(f"{name} index outside the trained model")

    def predict(self, user: int, item: int, context: int) -> float:
        return float(self.predict_many([user], [item], [context])[0])

    def predict_many(self, users, items, contexts=None) -> np.ndarray:
        if contexts is None:
            contexts = np.full(len(np.asarray(users)), self.W.shape[0] - 1)
        self._check(users, items, contexts)
        return clamp(self.raw(users, items, contexts), self.rating_scale)

    def predict_at(self, users, items, timestamps) -> np.ndarray:
        if self.binner is None:
            raise ValueError("model was trained without a timestamp binner")
        return self.predict_many(users, items, self.binner(timestamps))


def tf_loss(model: TensorModel, data: TensorData) -> float:
    e = data.values - model.raw(data.users, data.items, data.contexts)
    return float(e @ e + model.reg * sum(np.sum(m ** 2) for m in (model.U, model.V, model.W)))


def tf_gradient(model: TensorModel, data: TensorData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    e = data.values - model.raw(data.users, data.items, data.contexts)
    Uu, Vi, Wc = model.U[data.users], model.V[data.items], model.W[data.contexts]
    dU, dV, dW = (2 * model.reg * m for m in (model.U, model.V, model.W))
    np.add.at(dU, data.users, -2 * e[:, None] * Vi * Wc)
    np.add.at(dV, data.items, -2 * e[:, None] * Uu * Wc)
    np.add.at(dW, data.contexts, -2 * e[:, None] * Uu * Vi)
    return dU, dV, dW


@njit(cache=True)
def _tf_sgd_epoch(users, items, ctx, targets, order, U, V, W, lr, reg_u, reg_v, reg_w, batch, gU, gV, gW):
    n = order.shape[0]
    K = U.shape[1]
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        for t in range(start, stop):
            j = order[t]
            u = users[j]
            i = items[j]
            c = ctx[j]
            pred = 0.0
            for f in range(K):
                pred += U[u, f] * V[i, f] * W[c, f]
            e = targets[j] - pred
            for f in range(K):
                gU[u, f] += -2.0 * e * V[i, f] * W[c, f] + 2.0 * reg_u[u] * U[u, f]
                gV[i, f] += -2.0 * e * U[u, f] * W[c, f] + 2.0 * reg_v[i] * V[i, f]
                gW[c, f] += -2.0 * e * U[u, f] * V[i, f] + 2.0 * reg_w[c] * W[c, f]
        for t in range(start, stop):
            j = order[t]
            u = users[j]
            i = items[j]
            c = ctx[j]
            for f in range(K):
                U[u, f] -= lr * gU[u, f]
                gU[u, f] = 0.0
                V[i, f] -= lr * gV[i, f]
                gV[i, f] = 0.0
                W[c, f] -= lr * gW[c, f]
                gW[c, f] = 0.0


@njit(cache=True)
def _tf_objective(users, items, ctx, targets, U, V, W, reg):
    total = 0.0
    K = U.shape[1]
    for j in range(users.shape[0]):
        pred = 0.0
        for f in range(K):
            pred += U[users[j], f] * V[items[j], f] * W[ctx[j], f]
        e = targets[j] - pred
        total += e * e
    return total + reg * (np.sum(U * U) + np.sum(V * V) + np.sum(W * W))


def tf_fit(data: TensorData, K: int, config: TrainConfig = TrainConfig(),
           binner: TimeBinner | None = None) -> TensorModel:
    """SGD on the CP model ``sum_k U[u,k] * V[i,k] * W[c,k]``.

    Only ``center`` modes ``none`` and ``global`` apply; ``config.factors`` is
    ignored in favor of ``K``.
    """
    if K < 1:
        raise InvalidK(f"K must be >= 1, got {K}")
    if len(data.values) == 0:
        raise EmptyDataset("cannot fit on no observations")
    users, items, ctx = (np.ascontiguousarray(a, dtype=np.int64) for a in (data.users, data.items, data.contexts))
    vals = np.ascontiguousarray(data.values, dtype=np.float64)
    g = float(np.mean(vals)) if config.center != "none" else 0.0
    targets = vals - g
    rng = np.random.default_rng(config.seed)
    std = config.init_std if config.init_std is not None else 0.1 / math.sqrt(K)
    U = rng.normal(0.0, std, size=(data.n_users, K))
    V = rng.normal(0.0, std, size=(data.n_items, K))
    W = rng.normal(0.0, std, size=(data.n_contexts, K))
    reg_u = config.reg * _inv_counts(users, data.n_users)
    reg_v = config.reg * _inv_counts(items, data.n_items)
    reg_w = config.reg * _inv_counts(ctx, data.n_contexts)
    gU, gV, gW = np.zeros_like(U), np.zeros_like(V), np.zeros_like(W)
    initial = _tf_objective(users, items, ctx, targets, U, V, W, config.reg)
    history = [initial]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(vals.size)
        _tf_sgd_epoch(users, items, ctx, targets, order, U, V, W, config.learning_rate,
                      reg_u, reg_v, reg_w, config.batch_size, gU, gV, gW)
        loss = _tf_objective(users, items, ctx, targets, U, V, W, config.reg)
        _check_loss(loss, initial, epoch, "tensor factorization")
        history.append(loss)
    return TensorModel(U, V, W, config.reg, tuple(data.rating_scale), g, binner, tuple(history))


def tf_predict(model: TensorModel, user: int, item: int, context: int) -> float:
    return model.predict(user, item, context)


# ---------------------------------------------------------------------------
# factorization machines


@dataclass(frozen=True)
class FMLayout:
    """Feature layout: one-hot user block, one-hot item block, then extras."""
    n_users: int
    n_items: int
    n_extra: int = 0

    @property
    def size(self) -> int:
        return self.n_users + self.n_items + self.n_extra


@dataclass(frozen=True)
class FeatureVector:
    indices: np.ndarray
    values: np.ndarray
    length: int

    def toarray(self) -> np.ndarray:
        out = np.zeros(self.length)
        out[self.indices] = self.values
        return out


def fm_encode(user: int, item: int, layout: FMLayout, extras: Sequence[float] | None = None) -> FeatureVector:
    if not 0 <= user < layout.n_users:
        raise UnknownCategory(f"user {user} outside layout")
    if not 0 <= item < layout.n_items:
        raise UnknownCategory(f"item {item} outside layout")
    extras = [] if extras is None else list(extras)
    if len(extras) != layout.n_extra:
        raise DimensionError(f"expected {layout.n_extra} extra features, got {len(extras)}")
    idx = [user, layout.n_users + item]
    val = [1.0, 1.0]
    base = layout.n_users + layout.n_items
    for j, x in enumerate(extras):
        if x != 0:
            idx.append(base + j)
            val.append(float(x))
    return FeatureVector(np.array(idx, dtype=np.int64), np.array(val), layout.size)


@dataclass(frozen=True)
class FMModel:
    w0: float
    w: np.ndarray
    v: np.ndarray
    layout: FMLayout
    reg: float = 0.0
    offset: float = 0.0
    rating_scale: tuple[float, float] = (1.0, 5.0)
    loss_history: tuple[float, ...] = ()

    @property
    def n_features(self) -> int:
        return self.w.shape[0]

    def predict(self, user: int, item: int, extras=None) -> float:
        try:
            x = fm_encode(user, item, self.layout, extras)
        except UnknownCategory as exc:
            raise ColdStart(str(exc)) from None
        return float(clamp(fm_predict(self, x), self.rating_scale))

    def predict_many(self, users, items) -> np.ndarray:
        users = np.asarray(users, dtype=np.int64)
        items = np.asarray(items, dtype=np.int64)
        if self.layout.n_extra:
            raise ValueError("model needs extra features; use predict() per row")
        if users.size and (users.min() < 0 or users.max() >= self.layout.n_users
                           or items.min() < 0 or items.max() >= self.layout.n_items):
            raise ColdStart("user or item outside the model layout")
        a, b = users, self.layout.n_users + items
        raw = self.offset + self.w0 + self.w[a] + self.w[b] + np.einsum("ij,ij->i", self.v[a], self.v[b])
        return clamp(raw, self.rating_scale)

    def score_items(self, user: int) -> np.ndarray:
        items = np.arange(self.layout.n_items)
        return self.predict_many(np.full(items.size, user), items)


def _as_sparse(model_size: int, x) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(x, FeatureVector):
        if x.length != model_size:
            raise DimensionError(f"feature vector length {x.length} != model size {model_size}")
        return x.indices, x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape != (model_size,):
        raise DimensionError(f"feature vector shape {arr.shape} != ({model_size},)")
    nz = np.flatnonzero(arr)
    return nz, arr[nz]


def fm_predict(model: FMModel, x) -> float:
    """Order-2 FM output (plus the model's centering offset), unclamped.

    The pairwise term uses ``0.5 * sum_f [(sum_i v_if x_i)^2 - sum_i v_if^2 x_i^2]``.
    """
    idx, val = _as_sparse(model.n_features, x)
    vx = model.v[idx] * val[:, None]
    pair = 0.5 * float(np.sum(vx.sum(axis=0) ** 2 - (vx ** 2).sum(axis=0)))
    return float(model.offset + model.w0 + model.w[idx] @ val + pair)


@dataclass(frozen=True)
class FMData:
    """Rows of sparse features in CSR layout with targets."""
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    y: np.ndarray
    layout: FMLayout

    @classmethod
    def from_vectors(cls, rows: Sequence[FeatureVector], y, layout: FMLayout) -> "FMData":
        indptr = np.zeros(len(rows) + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(r.indices) for r in rows])
        idx = np.concatenate([r.indices for r in rows]).astype(np.int64) if rows else np.zeros(0, np.int64)
        val = np.concatenate([r.values for r in rows]) if rows else np.zeros(0)
        return cls(indptr, idx, val, np.asarray(y, dtype=np.float64), layout)

    @classmethod
    def from_dataset(cls, dataset: RatingDataset, extras: np.ndarray | None = None) -> "FMData":
        n = len(dataset)
        n_extra = 0 if extras is None else extras.shape[1]
        layout = FMLayout(dataset.n_users, dataset.n_items, n_extra)
        if n_extra == 0:
            idx = np.column_stack([dataset.users, dataset.n_users + dataset.items]).ravel()
            return cls(np.arange(0, 2 * n + 1, 2, dtype=np.int64), idx.astype(np.int64),
                       np.ones(2 * n), dataset.ratings.astype(np.float64), layout)
        rows = [fm_encode(int(u), int(i), layout, extras[r])
                for r, (u, i) in enumerate(zip(dataset.users, dataset.items))]
        return cls.from_vectors(rows, dataset.ratings, layout)

    def __len__(self) -> int:
        return len(self.y)

    def row(self, r: int) -> FeatureVector:
        s, e = self.indptr[r], self.indptr[r + 1]
        return FeatureVector(self.indices[s:e], self.values[s:e], self.layout.size)


def _fm_raw_batch(model: FMModel, data: FMData) -> np.ndarray:
    return np.array([fm_predict(model, data.row(r)) for r in range(len(data))])


def fm_loss(model: FMModel, data: FMData) -> float:
    e = data.y - _fm_raw_batch(model, data)
    return float(e @ e + model.reg * (np.sum(model.w ** 2) + np.sum(model.v ** 2)))


def fm_gradient(model: FMModel, data: FMData) -> tuple[float, np.ndarray, np.ndarray]:
    """Gradient of :func:`fm_loss` w.r.t. ``(w0, w, v)``; ``w0`` is unpenalized."""
    g0 = 0.0
    gw = 2 * model.reg * model.w
    gv = 2 * model.reg * model.v
    for r in range(len(data)):
        x = data.row(r)
        e = data.y[r] - fm_predict(model, x)
        s = (model.v[x.indices] * x.values[:, None]).sum(axis=0)
        g0 += -2 * e
        gw[x.indices] += -2 * e * x.values
        gv[x.indices] += -2 * e * x.values[:, None] * (s[None, :] - model.v[x.indices] * x.values[:, None])
    return g0, gw, gv


@njit(cache=True)
def _fm_sgd_epoch(indptr, indices, values, y, order, w0, w, v, lr, reg_f, batch, gw, gv, s):
    n = order.shape[0]
    kf = v.shape[1]
    for start in range(0, n, batch):
        stop = min(start + batch, n)
        g0 = 0.0
        for t in range(start, stop):
            r = order[t]
            a, b = indptr[r], indptr[r + 1]
            pred = w0[0]
            for f in range(kf):
                s[f] = 0.0
            sq = 0.0
            for p in range(a, b):
                j = indices[p]
                x = values[p]
                pred += w[j] * x
                for f in range(kf):
                    s[f] += v[j, f] * x
                    sq += v[j, f] * v[j, f] * x * x
            for f in range(kf):
                pred += 0.5 * s[f] * s[f]
            pred -= 0.5 * sq
            e = y[r] - pred
            g0 += -2.0 * e
            for p in range(a, b):
                j = indices[p]
                x = values[p]
                gw[j] += -2.0 * e * x + 2.0 * reg_f[j] * w[j]
                for f in range(kf):
                    gv[j, f] += -2.0 * e * x * (s[f] - v[j, f] * x) + 2.0 * reg_f[j] * v[j, f]
        w0[0] -= lr * g0
        for t in range(start, stop):
            r = order[t]
            for p in range(indptr[r], indptr[r + 1]):
                j = indices[p]
                w[j] -= lr * gw[j]
                gw[j] = 0.0
                for f in range(kf):
                    v[j, f] -= lr * gv[j, f]
                    gv[j, f] = 0.0


@njit(cache=True)
def _fm_objective(indptr, indices, values, y, w0, w, v, reg):
    total = 0.0
    kf = v.shape[1]
    s = np.zeros(kf)
    for r in range(y.shape[0]):
        pred = w0
        for f in range(kf):
            s[f] = 0.0
        sq = 0.0
        for p in range(indptr[r], indptr[r + 1]):
            j = indices[p]
            x = values[p]
            pred += w[j] * x
            for f in range(kf):
                s[f] += v[j, f] * x
                sq += v[j, f] * v[j, f] * x * x
        for f in range(kf):
            pred += 0.5 * s[f] * s[f]
        pred -= 0.5 * sq
        e = y[r] - pred
        total += e * e
    return total + reg * (np.sum(w * w) + np.sum(v * v))


def fm_fit(train: RatingDataset | FMData, config: TrainConfig = TrainConfig(),
           rating_scale: tuple[float, float] | None = None) -> FMModel:
    """SGD on squared error with L2 on ``w`` and ``v``.

    Targets are centered on their mean unless ``config.center == "none"``;
    the mean is stored as ``offset`` and re-added by every predictor.
    """
    if isinstance(train, RatingDataset):
        if len(train) == 0:
            raise EmptyDataset("empty training set")
        rating_scale = rating_scale or train.rating_scale
        data = FMData.from_dataset(train)
    else:
        data = train
    if len(data) == 0:
        raise EmptyDataset("empty training set")
    rating_scale = rating_scale or (1.0, 5.0)
    offset = float(np.mean(data.y)) if config.center != "none" else 0.0
    y = np.ascontiguousarray(data.y - offset)
    n = data.layout.size
    rng = np.random.default_rng(config.seed)
    w0 = np.zeros(1)
    w = np.zeros(n)
    v = rng.normal(0.0, config.std, size=(n, config.factors))
    reg_f = config.reg * _inv_counts(data.indices, n)
    gw, gv, s = np.zeros(n), np.zeros_like(v), np.zeros(config.factors)
    initial = _fm_objective(data.indptr, data.indices, data.values, y, 0.0, w, v, config.reg)
    history = [initial]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(y))
        _fm_sgd_epoch(data.indptr, data.indices, data.values, y, order, w0, w, v,
                      config.learning_rate, reg_f, config.batch_size, gw, gv, s)
        loss = _fm_objective(data.indptr, data.indices, data.values, y, w0[0], w, v, config.reg)
        _check_loss(loss, initial, epoch, "factorization machine")
        history.append(loss)
    return FMModel(float(w0[0]), w, v, data.layout, config.reg, offset, tuple(rating_scale), tuple(history))

