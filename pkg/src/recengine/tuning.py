"""Grid and random hyperparameter search scored on a validation set."""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .core import RatingDataset
from .errors import EmptyInput, InvalidConfig, RecEngineError
from .evaluation import EvalConfig, evaluate, predict_known, rmse
from .factor import TrainConfig, mf_fit
from .split import SplitResult, kfold

METRICS = {"rmse": "min", "map": "max"}
LOG_SCALE_AXES = frozenset({"learning_rate", "reg"})
# config-file spellings mapped onto TrainConfig fields
ALIASES = {"k": "factors", "lambda": "reg", "lr": "learning_rate"}

Trainer = Callable[[Mapping[str, Any], RatingDataset], Any]


@dataclass(frozen=True)
class HyperGrid:
    axes: tuple[tuple[str, tuple], ...]

    def __init__(self, axes: Mapping[str, Sequence] | Sequence[tuple[str, Sequence]]):
        items = list(axes.items()) if isinstance(axes, Mapping) else list(axes)
        norm = []
        for name, values in items:
            values = tuple(values)
            if not values:
                raise InvalidConfig(f"grid axis {name!r} is empty")
            norm.append((str(name), values))
        if not norm:
            raise InvalidConfig("grid has no axes")
        object.__setattr__(self, "axes", tuple(norm))

    def __iter__(self):
        names = [n for n, _ in self.axes]
        for combo in itertools.product(*(v for _, v in self.axes)):
            yield dict(zip(names, combo))

    def __len__(self) -> int:
        return math.prod(len(v) for _, v in self.axes)


@dataclass(frozen=True)
class Trial:
    params: dict
    value: float
    error: str | None = None


@dataclass(frozen=True)
class TuneResult:
    trials: tuple[Trial, ...]
    metric: str
    best_index: int

    @property
    def best(self) -> Trial:
        return self.trials[self.best_index]

    @property
    def best_params(self) -> dict:
        return self.best.params

    @property
    def best_value(self) -> float:
        return self.best.value

    def to_csv(self) -> str:
        names = sorted({k for t in self.trials for k in t.params})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["trial", *names, self.metric, "error"])
        for i, t in enumerate(self.trials):
            w.writerow([i, *(t.params.get(n, "") for n in names), repr(t.value), t.error or ""])
        return buf.getvalue()


def score(model, train: RatingDataset, validation: RatingDataset, metric: str, k: int = 10) -> float:
    if metric == "rmse":
        preds, actual = predict_known(model, validation, train)
        return rmse(preds, actual)
    if metric == "map":
        return evaluate(model, SplitResult(train, validation), EvalConfig(k=k)).map
    raise InvalidConfig(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")


def _select(trials: Sequence[Trial], metric: str) -> int:
    sign = 1.0 if METRICS[metric] == "min" else -1.0
    best, best_v = -1, math.inf
    for i, t in enumerate(trials):
        if t.error is None and math.isfinite(t.value) and sign * t.value < best_v:
            best, best_v = i, sign * t.value
    if best < 0:
        raise RecEngineError("every configuration failed")
    return best


def _run_trial(trainer: Trainer, params: dict, train: RatingDataset, validation: RatingDataset | None,
               metric: str, folds: int | None, seed: int) -> Trial:
    try:
        if folds:
            values = []
            for part in kfold(train, folds, seed):
                values.append(score(trainer(params, part.train), part.train, part.test, metric))
            return Trial(params, float(np.mean(values)))
        return Trial(params, score(trainer(params, train), train, validation, metric))
    except (RecEngineError, ArithmeticError, ValueError) as e:
        return Trial(params, math.nan, f"{type(e).__name__}: {e}")


def _check(validation, metric, folds):
    if metric not in METRICS:
        raise InvalidConfig(f"unknown metric {metric!r}; choose from {sorted(METRICS)}")
    if not folds and (validation is None or len(validation) == 0):
        raise EmptyInput("validation set is empty")


def grid_search(trainer: Trainer, grid: HyperGrid, train: RatingDataset, validation: RatingDataset | None,
                metric: str = "rmse", folds: int | None = None, seed: int = 0) -> TuneResult:
    """Evaluate every grid cell in declaration order. Failed cells are kept
    with their error message; ties go to the earlier cell."""
    _check(validation, metric, folds)
    trials = tuple(_run_trial(trainer, p, train, validation, metric, folds, seed) for p in grid)
    return TuneResult(trials, metric, _select(trials, metric))


def sample_space(space: Mapping[str, Any], n_trials: int, seed: int) -> list[dict]:
    """Draw ``n_trials`` configurations.

    A ``(lo, hi)`` pair samples uniformly (integers when both ends are
    ints), log-uniformly for learning_rate and reg when ``lo > 0``; a list
    samples one of its elements.
    """
    if n_trials < 1:
        raise InvalidConfig(f"n_trials must be >= 1, got {n_trials}")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_trials):
        params = {}
        for name, spec in space.items():
            if isinstance(spec, list):
                if not spec:
                    raise InvalidConfig(f"axis {name!r} is empty")
                params[name] = spec[int(rng.integers(len(spec)))]
                continue
            lo, hi = spec
            if hi < lo:
                raise InvalidConfig(f"axis {name!r}: max < min")
            if lo == hi:
                params[name] = lo
            elif isinstance(lo, int) and isinstance(hi, int) and not isinstance(lo, bool):
                params[name] = int(rng.integers(lo, hi + 1))
            elif ALIASES.get(name, name) in LOG_SCALE_AXES and lo > 0:
                # exp(log(x)) can round past either end
                params[name] = float(min(max(math.exp(rng.uniform(math.log(lo), math.log(hi))), lo), hi))
            else:
                params[name] = float(rng.uniform(lo, hi))
        out.append(params)
    return out


def random_search(trainer: Trainer, space: Mapping[str, Any], n_trials: int, seed: int, train: RatingDataset,
                  validation: RatingDataset | None, metric: str = "rmse", folds: int | None = None) -> TuneResult:
    _check(validation, metric, folds)
    trials = tuple(_run_trial(trainer, p, train, validation, metric, folds, seed)
                   for p in sample_space(space, n_trials, seed))
    return TuneResult(trials, metric, _select(trials, metric))


def apply_params(base: TrainConfig, params: Mapping[str, Any]) -> TrainConfig:
    fields = {}
    for name, value in params.items():
        key = ALIASES.get(name, name)
        if key not in TrainConfig.__dataclass_fields__:
            raise InvalidConfig(f"unknown hyperparameter {name!r}")
        fields[key] = value
    return replace(base, **fields)


def mf_trainer(base: TrainConfig = TrainConfig()) -> Trainer:
    """Trainer fitting MF with ``params`` layered over ``base``."""
    def train(params: Mapping[str, Any], data: RatingDataset):
        return mf_fit(data, apply_params(base, params))
    return train
