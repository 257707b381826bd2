"""Scaling transforms, sparse per-axis centering and feature engineering."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .core import RatingDataset, SparseRatingMatrix
from .errors import DegenerateScale, DomainError, EmptyDataset, EmptyInput, UnknownCategory

Method = Literal["minmax", "zscore", "robust", "log"]
METHODS = ("minmax", "zscore", "robust", "log")


@dataclass(frozen=True)
class NormalizationParams:
    """Fitted scaling parameters.

    The affine methods map ``x -> (x - loc) / scale`` where ``(loc, scale)`` is
    ``(min, max - min)``, ``(mean, std)`` or ``(median, IQR)``. The log method
    only uses ``base``.
    """

    method: Method
    loc: float = 0.0
    scale: float = 1.0
    base: float = math.e

    @property
    def x_min(self) -> float:
        return self.loc

    @property
    def x_max(self) -> float:
        return self.loc + self.scale

    @property
    def mean(self) -> float:
        return self.loc

    @property
    def std(self) -> float:
        return self.scale

    @property
    def median(self) -> float:
        return self.loc

    @property
    def iqr(self) -> float:
        return self.scale


def quartiles(values: Sequence[float]) -> tuple[float, float, float]:
    """Q1, median, Q3 with linear interpolation between order statistics."""
    q1, q2, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75], method="linear")
    return float(q1), float(q2), float(q3)


def fit_normalizer(values: Sequence[float], method: Method, base: float = math.e) -> NormalizationParams:
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise EmptyInput("cannot fit a normalizer on no values")
    if method == "minmax":
        lo, hi = float(x.min()), float(x.max())
        if hi <= lo:
            raise DegenerateScale("min-max scaling of a constant feature")
        return NormalizationParams("minmax", lo, hi - lo)
    if method == "zscore":
        mu, sigma = float(x.mean()), float(x.std())
        if sigma <= 0:
            raise DegenerateScale("z-score of a constant feature")
        return NormalizationParams("zscore", mu, sigma)
    if method == "robust":
        q1, med, q3 = quartiles(x)
        if q3 - q1 <= 0:
            raise DegenerateScale("robust scaling with zero interquartile range")
        return NormalizationParams("robust", med, q3 - q1)
    if method == "log":
        if base <= 0 or base == 1:
            raise DomainError(f"log base must be positive and != 1, got {base}")
        if np.any(x <= 0):
            raise DomainError("log transform requires strictly positive values")
        return NormalizationParams("log", base=float(base))
    raise ValueError(f"unknown normalization method {method!r}; expected one of {METHODS}")


def apply_normalizer(params: NormalizationParams, x):
    """Scalar or array in, same shape out."""
    if params.method == "log":
        arr = np.asarray(x, dtype=np.float64)
        if np.any(arr <= 0):
            raise DomainError("log of a non-positive value")
        out = np.log(arr) / math.log(params.base)
        return float(out) if out.ndim == 0 else out
    out = (np.asarray(x, dtype=np.float64) - params.loc) / params.scale
    return float(out) if out.ndim == 0 else out


def invert_normalizer(params: NormalizationParams, y):
    if params.method == "log":
        out = np.power(params.base, np.asarray(y, dtype=np.float64))
    else:
        out = np.asarray(y, dtype=np.float64) * params.scale + params.loc
    return float(out) if out.ndim == 0 else out


def axis_means(matrix: SparseRatingMatrix, axis: Literal["user", "item"]) -> np.ndarray:
    """Mean stored value per row (``user``) or column (``item``); 0 for empty axes."""
    if axis == "user":
        idx, n = matrix.rows, matrix.n_users
    elif axis == "item":
        idx, n = matrix.cols, matrix.n_items
    else:
        raise ValueError(f"axis must be 'user' or 'item', got {axis!r}")
    sums = np.bincount(idx, weights=matrix.values, minlength=n)
    counts = np.bincount(idx, minlength=n)
    return np.divide(sums, counts, out=np.zeros(n), where=counts > 0)


def per_axis_center(matrix: SparseRatingMatrix, axis: Literal["user", "item"]):
    """Subtract each user's (or item's) mean from its stored entries.

    Returns ``(centered, means)``; pass both to :func:`per_axis_decenter` to undo.
    """
    means = axis_means(matrix, axis)
    idx = matrix.rows if axis == "user" else matrix.cols
    return matrix.with_values(matrix.values - means[idx]), means


def per_axis_decenter(centered: SparseRatingMatrix, means: np.ndarray, axis: Literal["user", "item"]):
    idx = centered.rows if axis == "user" else centered.cols
    return centered.with_values(centered.values + means[idx])


def one_hot_encode(value, vocabulary: Sequence) -> np.ndarray:
    vocab = list(vocabulary)
    try:
        pos = vocab.index(value)
    except ValueError:
        raise UnknownCategory(f"{value!r} not in vocabulary") from None
    out = np.zeros(len(vocab), dtype=np.int8)
    out[pos] = 1
    return out


@dataclass(frozen=True)
class UserFeatures:
    mean_rating: float
    rating_count: int
    last_activity: int

    def as_vector(self) -> np.ndarray:
        return np.array([self.mean_rating, self.rating_count, self.last_activity], dtype=np.float64)


def derive_user_features(dataset: RatingDataset) -> dict[int, UserFeatures]:
    """Mean rating, rating count and last-activity timestamp per raw user id."""
    if len(dataset) == 0:
        raise EmptyDataset("no interactions to derive features from")
    n = dataset.n_users
    counts = np.bincount(dataset.users, minlength=n)
    sums = np.bincount(dataset.users, weights=dataset.ratings, minlength=n)
    last = np.full(n, -1, dtype=np.int64)
    np.maximum.at(last, dataset.users, dataset.timestamps)
    out = {}
    for d in np.flatnonzero(counts):
        out[int(dataset.user_ids[d])] = UserFeatures(float(sums[d] / counts[d]), int(counts[d]), int(last[d]))
    return out
