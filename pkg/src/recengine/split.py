"""Train/test partitioning: random, temporal, k-fold, per-user stratified,
and validation carving.

All strategies are deterministic for a fixed ``(dataset, params, seed)``.
Subsets keep the parent's id maps and preserve the parent's row order.
"""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .core import RatingDataset
from .errors import AlreadyCarved, InvalidFraction, InvalidK


@dataclass(frozen=True)
class SplitResult:
    train: RatingDataset
    test: RatingDataset
    validation: RatingDataset | None = None
    seed: int | None = None
    strategy: str = ""


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _check_fraction(fraction: float, name: str = "test_fraction") -> None:
    if not 0.0 < fraction < 1.0:
        raise InvalidFraction(f"{name} must lie in (0, 1), got {fraction}")


def _partition(dataset: RatingDataset, test_mask: np.ndarray) -> tuple[RatingDataset, RatingDataset]:
    return dataset.subset(np.flatnonzero(~test_mask)), dataset.subset(np.flatnonzero(test_mask))


def train_test_split(dataset: RatingDataset, test_fraction: float = 0.2, seed: int = 0) -> SplitResult:
    """Uniform random split with ``round(test_fraction * N)`` test rows."""
    _check_fraction(test_fraction)
    n = len(dataset)
    if n < 2:
        raise InvalidFraction("need at least 2 interactions to split")
    n_test = round_half_up(test_fraction * n)
    if not 0 < n_test < n:
        raise InvalidFraction(f"test_fraction {test_fraction} leaves an empty side for N={n}")
    perm = np.random.default_rng(seed).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[perm[:n_test]] = True
    train, test = _partition(dataset, mask)
    return SplitResult(train, test, seed=seed, strategy="random")


def time_split(dataset: RatingDataset, cutoff_ts: int) -> SplitResult:
    """Train on ``ts < cutoff``, test on ``ts >= cutoff``."""
    mask = dataset.timestamps >= cutoff_ts
    if mask.all() or not mask.any():
        warnings.warn(f"cutoff {cutoff_ts} leaves the {'train' if mask.all() else 'test'} side empty",
                      stacklevel=2)
    train, test = _partition(dataset, mask)
    return SplitResult(train, test, strategy="time")


def kfold(dataset: RatingDataset, k: int = 5, seed: int = 0) -> list[SplitResult]:
    """``k`` splits whose test folds partition the data (sizes differ by <= 1)."""
    n = len(dataset)
    if not 2 <= k <= n:
        raise InvalidK(f"k must satisfy 2 <= k <= N={n}, got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    out = []
    for fold in np.array_split(perm, k):
        mask = np.zeros(n, dtype=bool)
        mask[fold] = True
        train, test = _partition(dataset, mask)
        out.append(SplitResult(train, test, seed=seed, strategy="kfold"))
    return out


def fold_assignments(n: int, k: int, seed: int) -> np.ndarray:
    """Fold id of each row, matching :func:`kfold`."""
    if not 2 <= k <= n:
        raise InvalidK(f"k must satisfy 2 <= k <= N={n}, got {k}")
    perm = np.random.default_rng(seed).permutation(n)
    out = np.empty(n, dtype=np.int64)
    for f, fold in enumerate(np.array_split(perm, k)):
        out[fold] = f
    return out


def stratified_split(dataset: RatingDataset, test_fraction: float = 0.2, seed: int = 0) -> SplitResult:
    """Per-user split, then item-coverage repair.

    Each user contributes ``round(test_fraction * n_u)`` rows to test, capped
    at ``n_u - 1`` so a user with two or more ratings always keeps one in
    train; single-rating users stay entirely in train. Afterwards any item
    whose every interaction landed in test gets its earliest such row moved
    back to train.
    """
    _check_fraction(test_fraction)
    n = len(dataset)
    if n < 2:
        raise InvalidFraction("need at least 2 interactions to split")
    rng = np.random.default_rng(seed)
    mask = np.zeros(n, dtype=bool)
    order = np.argsort(dataset.users, kind="stable")
    bounds = np.flatnonzero(np.diff(dataset.users[order])) + 1
    for rows in np.split(order, bounds):
        n_u = len(rows)
        n_test = min(round_half_up(test_fraction * n_u), n_u - 1)
        if n_test > 0:
            mask[rng.permutation(rows)[:n_test]] = True

    items = dataset.items
    in_train = np.zeros(dataset.n_items, dtype=bool)
    in_train[items[~mask]] = True
    for row in np.flatnonzero(mask):
        if not in_train[items[row]]:
            mask[row] = False
            in_train[items[row]] = True

    train, test = _partition(dataset, mask)
    return SplitResult(train, test, seed=seed, strategy="stratified")


def carve_validation(split: SplitResult, val_fraction: float = 0.125, seed: int = 0) -> SplitResult:
    """Move ``round(val_fraction * |train|)`` random train rows into validation."""
    if split.validation is not None:
        raise AlreadyCarved("split already has a validation set")
    _check_fraction(val_fraction, "val_fraction")
    n = len(split.train)
    n_val = round_half_up(val_fraction * n)
    if not 0 < n_val < n:
        raise InvalidFraction(f"val_fraction {val_fraction} yields {n_val} of {n} train rows")
    perm = np.random.default_rng(seed).permutation(n)
    mask = np.zeros(n, dtype=bool)
    mask[perm[:n_val]] = True
    train, validation = _partition(split.train, mask)
    return replace(split, train=train, validation=validation)


def export_split(split: SplitResult, directory: str | os.PathLike) -> dict[str, Path]:
    """Write ``train.tsv``/``test.tsv`` (and ``validation.tsv``) in ``u.data`` layout."""
    from .ingest import write_ratings

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    parts = {"train": split.train, "test": split.test}
    if split.validation is not None:
        parts["validation"] = split.validation
    out = {}
    for name, ds in parts.items():
        path = directory / f"{name}.tsv"
        write_ratings(ds, path)
        out[name] = path
    return out
