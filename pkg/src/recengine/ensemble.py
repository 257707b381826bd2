"""Model combinations: weighted averaging, bagging, boosting, stacking and a
weighted CF + content hybrid.

Every ensemble exposes the same surface as a single model: ``predict``,
``predict_many`` and ``score_items`` over dense indices, clamped to the
rating scale.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .core import RatingDataset, clamp
from .errors import ColdStart, DimensionError, DivergenceError, InvalidConfig, SingularSystem
from .factor import MFModel, TrainConfig, fit_mf_arrays
from .ingest import ItemFeatures
from .similarity import build_user_profile, cbf_predict
from .split import fold_assignments

SCHEMES = ("weighted", "bagging", "boosting", "stacking", "hybrid")


@dataclass(frozen=True)
class EnsembleSpec:
    """Declarative description of an ensemble, as read from a config file."""

    scheme: str
    members: tuple[str, ...] = ()
    weights: tuple[float, ...] | None = None
    n: int = 5
    rounds: int = 5
    shrinkage: float = 1.0
    beta: float = 0.5
    meta_reg: float = 1e-3
    folds: int = 5

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidConfig(f"unknown ensemble scheme {self.scheme!r}")
        if self.weights is not None:
            if len(self.weights) != len(self.members):
                raise DimensionError("one weight per member is required")
            if not all(math.isfinite(w) for w in self.weights):
                raise InvalidConfig("weights must be finite")
        if self.scheme == "bagging" and self.n < 1:
            raise InvalidConfig("bagging needs n >= 1")


def _normalize(weights) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise DimensionError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)):
        raise InvalidConfig("weights must be finite")
    total = w.sum()
    if total == 0:
        raise InvalidConfig("weights sum to zero")
    return w / total


def _combine(preds: Sequence[np.ndarray], w: np.ndarray) -> np.ndarray:
    # Offsetting by the first member keeps equal members exact:
    # p0 + sum w_k (p_k - p0) is p0 bit for bit when all p_k agree.
    base = np.asarray(preds[0], dtype=np.float64)
    out = base.copy()
    for wk, p in zip(w, preds):
        out = out + wk * (np.asarray(p, dtype=np.float64) - base)
    return out


def weighted_combine(predictions: Sequence[float], weights: Sequence[float]) -> float:
    """sum_k w_k * r_k with weights that already sum to 1."""
    p = np.asarray(predictions, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if p.shape != w.shape:
        raise DimensionError(f"{p.size} predictions but {w.size} weights")
    if abs(w.sum() - 1.0) > 1e-9:
        raise InvalidConfig(f"weights must sum to 1, got {w.sum()}")
    return float(np.dot(w, p))


@dataclass(frozen=True)
class WeightedEnsemble:
    members: tuple
    weights: np.ndarray
    rating_scale: tuple[float, float] = (1.0, 5.0)

    def __init__(self, members, weights=None, rating_scale=(1.0, 5.0)):
        members = tuple(members)
        if not members:
            raise InvalidConfig("an ensemble needs at least one member")
        w = np.full(len(members), 1.0) if weights is None else np.asarray(weights, dtype=np.float64)
        if w.size != len(members):
            raise DimensionError(f"{len(members)} members but {w.size} weights")
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "weights", _normalize(w))
        object.__setattr__(self, "rating_scale", tuple(rating_scale))

    def predict_many(self, users, items) -> np.ndarray:
        preds = [m.predict_many(users, items) for m in self.members]
        return clamp(_combine(preds, self.weights), self.rating_scale)

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0])

    def score_items(self, user: int) -> np.ndarray:
        n = _n_items(self.members[0])
        return self.predict_many(np.full(n, user), np.arange(n))


def _n_items(model) -> int:
    """Catalog size of any fitted model in the package."""
    if hasattr(model, "n_items"):
        return int(model.n_items)
    if hasattr(model, "layout"):
        return model.layout.n_items
    if hasattr(model, "matrix"):
        return model.matrix.n_items
    if hasattr(model, "features"):
        return model.features.item_mean.size
    if hasattr(model, "entity_matrix"):
        em = model.entity_matrix
        return em.n_users if model.mode == "item" else em.n_items
    if hasattr(model, "members"):
        return _n_items(model.members[0])
    raise AttributeError("cannot infer the catalog size of this model")


def inverse_rmse_weights(members: Sequence, validation: RatingDataset) -> np.ndarray:
    """Weights proportional to 1 / validation RMSE. Members with zero error
    share all the weight."""
    if len(validation) == 0:
        raise InvalidConfig("empty validation set")
    errs = []
    for m in members:
        d = m.predict_many(validation.users, validation.items) - validation.ratings
        errs.append(math.sqrt(float(d @ d) / d.size))
    errs = np.asarray(errs)
    if np.any(errs == 0):
        return _normalize((errs == 0).astype(np.float64))
    return _normalize(1.0 / errs)


# ---------------------------------------------------------------------------
# bagging


def bootstrap_indices(rng: np.random.Generator, n: int) -> np.ndarray:
    """N draws with replacement from range(N)."""
    return rng.integers(0, n, size=n)


@dataclass(frozen=True)
class BaggingEnsemble:
    members: tuple[MFModel, ...]
    samples: tuple[np.ndarray, ...]
    rating_scale: tuple[float, float] = (1.0, 5.0)

    @property
    def n_items(self) -> int:
        return self.members[0].n_items

    def predict_many(self, users, items) -> np.ndarray:
        preds = [m.predict_many(users, items) for m in self.members]
        w = np.full(len(preds), 1.0 / len(preds))
        return clamp(_combine(preds, w), self.rating_scale)

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0])

    def score_items(self, user: int) -> np.ndarray:
        n = self.n_items
        return self.predict_many(np.full(n, user), np.arange(n))


def bagging_fit(train: RatingDataset, base_config: TrainConfig = TrainConfig(), n: int = 5, seed: int = 0,
                sampler: Callable[[np.random.Generator, int], np.ndarray] = bootstrap_indices) -> BaggingEnsemble:
    """Fit ``n`` MF models on bootstrap resamples of ``train``.

    Resample generators are spawned from ``seed``; every member starts from
    the same ``base_config.seed`` initialization, so members differ only in
    the data they saw.
    """
    if n < 1:
        raise InvalidConfig(f"bagging needs n >= 1, got {n}")
    if len(train) == 0:
        raise InvalidConfig("empty training set")
    children = np.random.SeedSequence(seed).spawn(n)
    members, samples = [], []
    for k, child in enumerate(children):
        idx = np.asarray(sampler(np.random.default_rng(child), len(train)), dtype=np.int64)
        try:
            m = fit_mf_arrays(train.users[idx], train.items[idx], train.ratings[idx],
                              train.n_users, train.n_items, base_config, train.rating_scale)
        except DivergenceError as e:
            raise DivergenceError(f"bagging member {k}: {e}", epoch=e.epoch, member=k) from e
        members.append(m)
        samples.append(idx)
    return BaggingEnsemble(tuple(members), tuple(samples), tuple(train.rating_scale))


# ---------------------------------------------------------------------------
# boosting


@dataclass(frozen=True)
class BoostingEnsemble:
    """``mu + sum_k alpha_k h_k`` where each h_k fits the residuals left by
    the stages before it."""

    mu: float
    members: tuple[MFModel, ...]
    alphas: tuple[float, ...]
    train_rmse: tuple[float, ...]
    rating_scale: tuple[float, float] = (1.0, 5.0)
    n_items: int = 0

    def raw(self, users, items) -> np.ndarray:
        out = np.full(np.asarray(users).shape, self.mu, dtype=np.float64)
        for a, m in zip(self.alphas, self.members):
            m._check(users, items)
            out = out + a * m.raw(users, items)
        return out

    def predict_many(self, users, items) -> np.ndarray:
        return clamp(self.raw(users, items), self.rating_scale)

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0])

    def score_items(self, user: int) -> np.ndarray:
        n = self.n_items
        return self.predict_many(np.full(n, user), np.arange(n))


def boosting_fit(train: RatingDataset, base_config: TrainConfig = TrainConfig(optimizer="als"),
                 rounds: int = 5, shrinkage: float = 1.0) -> BoostingEnsemble:
    """Stagewise residual fitting from a global-mean stage 0.

    A round is kept only when it does not raise the clamped training error;
    the first round that would stops the sweep, so ``train_rmse`` (one entry
    per kept stage, stage 0 first) never increases.
    """
    if rounds < 1:
        raise InvalidConfig(f"rounds must be >= 1, got {rounds}")
    if not 0.0 < shrinkage <= 1.0:
        raise InvalidConfig(f"shrinkage must lie in (0, 1], got {shrinkage}")
    if len(train) == 0:
        raise InvalidConfig("empty training set")
    y = train.ratings
    mu = float(np.mean(y))
    F = np.full(y.shape, mu)
    scale = tuple(train.rating_scale)

    def err(f):
        d = clamp(f, scale) - y
        return math.sqrt(float(d @ d) / d.size)

    history = [err(F)]
    members, alphas = [], []
    cfg = replace(base_config, center="none")
    for r in range(rounds):
        resid = y - F
        try:
            h = fit_mf_arrays(train.users, train.items, resid, train.n_users, train.n_items,
                              replace(cfg, seed=cfg.seed + r), scale)
        except DivergenceError as e:
            raise DivergenceError(f"boosting round {r}: {e}", epoch=e.epoch, member=r) from e
        F_new = F + shrinkage * h.raw(train.users, train.items)
        e_new = err(F_new)
        if e_new > history[-1]:
            break
        members.append(h)
        alphas.append(shrinkage)
        history.append(e_new)
        F = F_new
    return BoostingEnsemble(mu, tuple(members), tuple(alphas), tuple(history), scale, train.n_items)


# ---------------------------------------------------------------------------
# stacking


def fit_meta_weights(P: np.ndarray, y: np.ndarray, reg: float) -> np.ndarray:
    """Ridge meta-model without intercept, weights constrained to sum to 1.

    Minimizes ||y - P w||^2 + reg * ||w - 1/n||^2 subject to sum(w) = 1. The
    constraint makes redundant members split a unit coefficient, so stacking
    copies of one model reproduces that model.
    """
    P = np.asarray(P, dtype=np.float64)
    n = P.shape[1]
    if reg < 0:
        raise InvalidConfig("meta_reg must be >= 0")
    u = np.full(n, 1.0 / n)
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * (P.T @ P + reg * np.eye(n))
    kkt[:n, n] = 1.0
    kkt[n, :n] = 1.0
    rhs = np.concatenate([2.0 * (P.T @ y + reg * u), [1.0]])
    if np.linalg.matrix_rank(kkt) < n + 1:
        raise SingularSystem("meta-features are collinear; use meta_reg > 0")
    return np.linalg.solve(kkt, rhs)[:n]


@dataclass(frozen=True)
class StackingEnsemble:
    members: tuple
    weights: np.ndarray
    oof_predictions: np.ndarray
    fold_ids: np.ndarray
    rating_scale: tuple[float, float] = (1.0, 5.0)

    def predict_many(self, users, items) -> np.ndarray:
        P = np.column_stack([m.predict_many(users, items) for m in self.members])
        return clamp(P @ self.weights, self.rating_scale)

    def predict(self, user: int, item: int) -> float:
        return float(self.predict_many([user], [item])[0])

    def score_items(self, user: int) -> np.ndarray:
        n = _n_items(self.members[0])
        return self.predict_many(np.full(n, user), np.arange(n))


def _safe_predict(model, ds: RatingDataset, fallback: float) -> np.ndarray:
    try:
        return np.asarray(model.predict_many(ds.users, ds.items), dtype=np.float64)
    except ColdStart:
        out = np.empty(len(ds))
        for r, (u, i) in enumerate(zip(ds.users, ds.items)):
            try:
                out[r] = model.predict(int(u), int(i))
            except ColdStart:
                out[r] = fallback
        return out


def stacking_fit(train: RatingDataset, base_specs: Sequence[Callable[[RatingDataset], object]], seed: int = 0,
                 folds: int = 5, meta_reg: float = 1e-3) -> StackingEnsemble:
    """Out-of-fold stacking.

    Each base factory is fit on every fold complement and predicts the
    held-out fold; those predictions train the meta-model. The members kept
    for prediction are then refit on all of ``train``. Pairs a fold model
    cannot score fall back to the complement's mean rating.
    """
    if len(base_specs) < 2:
        raise InvalidConfig("stacking needs at least 2 base models")
    fold_ids = fold_assignments(len(train), folds, seed)
    oof = np.empty((len(train), len(base_specs)))
    for f in range(folds):
        held = np.flatnonzero(fold_ids == f)
        rest = np.flatnonzero(fold_ids != f)
        fit_ds, held_ds = train.subset(rest), train.subset(held)
        fallback = float(np.mean(fit_ds.ratings))
        for j, factory in enumerate(base_specs):
            oof[held, j] = _safe_predict(factory(fit_ds), held_ds, fallback)
    w = fit_meta_weights(oof, train.ratings, meta_reg)
    members = tuple(factory(train) for factory in base_specs)
    return StackingEnsemble(members, w, oof, fold_ids, tuple(train.rating_scale))


# ---------------------------------------------------------------------------
# CF + content hybrid


def hybrid_weighted(cf_score: float, cbf_score: float, beta: float) -> float:
    if not 0.0 <= beta <= 1.0:
        raise InvalidConfig(f"beta must lie in [0, 1], got {beta}")
    if cf_score == cbf_score:
        # the blend can be an ulp off when both sides agree
        return cf_score
    return beta * cf_score + (1.0 - beta) * cbf_score


@dataclass
class WeightedHybrid:
    """beta * CF prediction + (1 - beta) * content score.

    The content score (a cosine in [0, 1] for non-negative features) is
    stretched onto the rating scale first. Users without a liked item get
    the CF prediction alone.
    """

    cf: object
    train: RatingDataset
    catalog: Mapping[int, ItemFeatures]
    beta: float = 0.5
    like_threshold: float = 4.0
    _profiles: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidConfig(f"beta must lie in [0, 1], got {self.beta}")

    @property
    def rating_scale(self) -> tuple[float, float]:
        return tuple(self.train.rating_scale)

    def _profile(self, user: int):
        if user not in self._profiles:
            raw = int(self.train.user_ids[user])
            try:
                self._profiles[user] = build_user_profile(self.train, self.catalog, raw, self.like_threshold)
            except ColdStart:
                self._profiles[user] = None
        return self._profiles[user]

    def predict(self, user: int, item: int) -> float:
        cf = float(self.cf.predict(user, item))
        prof = self._profile(user)
        raw_item = int(self.train.item_ids[item])
        if prof is None or raw_item not in self.catalog:
            return cf
        lo, hi = self.rating_scale
        cbf = lo + (hi - lo) * max(cbf_predict(prof, self.catalog[raw_item]), 0.0)
        return float(clamp(hybrid_weighted(cf, cbf, self.beta), self.rating_scale))

    def predict_many(self, users, items) -> np.ndarray:
        return np.array([self.predict(int(u), int(i)) for u, i in zip(users, items)], dtype=np.float64)
