"""Accuracy and ranking metrics plus a driver that scores a fitted model on a
split.

Zero-denominator metrics come back as 0 with a degenerate flag, never NaN.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .core import top_k_indices
from .errors import EmptyInput, InvalidK, UndefinedAUC
from .split import SplitResult

REPORT_VERSION = 1


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @classmethod
    def from_labels(cls, predicted: Sequence[bool], actual: Sequence[bool]) -> "ConfusionCounts":
        p = np.asarray(predicted, dtype=bool)
        a = np.asarray(actual, dtype=bool)
        return cls(int(np.sum(p & a)), int(np.sum(p & ~a)), int(np.sum(~p & a)), int(np.sum(~p & ~a)))


@dataclass(frozen=True)
class ClassificationMetrics:
    precision: float
    recall: float
    f1: float
    accuracy: float
    degenerate: frozenset[str] = frozenset()


def _ratio(num: float, den: float, name: str, flags: set) -> float:
    if den == 0:
        flags.add(name)
        return 0.0
    return num / den


def classification_metrics(c: ConfusionCounts) -> ClassificationMetrics:
    flags: set[str] = set()
    p = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    r = _ratio(c.tp, c.tp + c.fn, "recall", flags)
    f1 = _ratio(2 * p * r, p + r, "f1", flags)
    acc = _ratio(c.tp + c.tn, c.tp + c.fp + c.fn + c.tn, "accuracy", flags)
    return ClassificationMetrics(p, r, f1, acc, frozenset(flags))


@dataclass(frozen=True)
class RankedJudgments:
    """One user's ranked list as relevance flags, plus the user's total
    number of relevant items (which may exceed the flags that are set)."""

    relevance: tuple[bool, ...]
    n_relevant: int

    def __post_init__(self):
        if self.n_relevant < sum(self.relevance):
            raise ValueError("n_relevant is smaller than the relevant items in the list")


def precision_at_k(relevance: Sequence[bool] | RankedJudgments, k: int) -> float:
    """Relevant items among the first ``k`` over ``k``; short lists count
    their missing slots as misses."""
    if k < 1:
        raise InvalidK(f"k must be >= 1, got {k}")
    flags = relevance.relevance if isinstance(relevance, RankedJudgments) else relevance
    return sum(bool(x) for x in list(flags)[:k]) / k


def average_precision(judgments: RankedJudgments) -> float | None:
    """Mean of P@k over the positions k holding a relevant item, divided by
    the user's total relevant count. ``None`` when the user has none."""
    if judgments.n_relevant == 0:
        return None
    hits = 0
    total = 0.0
    for pos, rel in enumerate(judgments.relevance, start=1):
        if rel:
            hits += 1
            total += hits / pos
    return total / judgments.n_relevant


def mean_average_precision(all_judgments: Iterable[RankedJudgments]) -> float:
    """Mean AP over users that have at least one relevant item (0 if none do)."""
    aps = [ap for ap in (average_precision(j) for j in all_judgments) if ap is not None]
    return float(np.mean(aps)) if aps else 0.0


def auc_roc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Mann-Whitney rank statistic with midranks for ties."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUC("AUC needs at least one positive and one negative")
    ranks = rankdata(s, method="average")
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def rmse(predicted: Sequence[float], actual: Sequence[float]) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    a = np.asarray(actual, dtype=np.float64)
    if p.size == 0:
        raise EmptyInput("rmse of no pairs")
    if p.shape != a.shape:
        raise ValueError("predicted and actual differ in length")
    d = p - a
    return math.sqrt(float(d @ d) / d.size)


def coverage(recommendations: Iterable[Iterable[int]], catalog_size: int) -> float:
    if catalog_size < 1:
        raise ValueError("catalog_size must be >= 1")
    seen: set[int] = set()
    for rec in recommendations:
        seen.update(int(i) for i in rec)
    return len(seen) / catalog_size


@dataclass(frozen=True)
class EvalConfig:
    k: int = 10
    relevance_threshold: float = 4.0
    full_catalog: bool = False
    extra_ks: tuple[int, ...] = ()
    seed: int | None = None

    @property
    def ks(self) -> tuple[int, ...]:
        return tuple(sorted({self.k, *self.extra_ks}))


@dataclass(frozen=True)
class EvaluationReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    p_at_k: dict[int, float]
    map: float
    auc: float
    rmse: float
    coverage: float
    n_test: int
    n_evaluated: int
    n_users: int
    cold_start: int
    k: int
    relevance_threshold: float
    full_catalog: bool
    seed: int | None = None
    degenerate: tuple[str, ...] = ()
    model: str = ""

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p_at_k"] = {str(k): v for k, v in sorted(self.p_at_k.items())}
        d["degenerate"] = sorted(self.degenerate)
        d["report_version"] = REPORT_VERSION
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = []
        for key, value in sorted(self.to_dict().items()):
            if isinstance(value, dict):
                for sub, v in value.items():
                    lines.append(f"{key}.{sub}={_fmt(v)}")
            elif isinstance(value, list):
                lines.append(f"{key}={','.join(map(str, value))}")
            else:
                lines.append(f"{key}={_fmt(value)}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _user_groups(users: np.ndarray) -> list[np.ndarray]:
    order = np.argsort(users, kind="stable")
    bounds = np.flatnonzero(np.diff(users[order])) + 1
    return [g for g in np.split(order, bounds) if g.size]


def evaluate(model, split: SplitResult, config: EvalConfig = EvalConfig(), name: str = "") -> EvaluationReport:
    """Score ``model`` on ``split.test``.

    Test pairs whose user or item never occurs in ``split.train`` are cold
    starts: counted, then left out of every metric. Relevance is
    ``rating >= relevance_threshold``; the classification counts compare
    predicted and actual ratings against that same threshold. Ranking
    metrics rank each user's test items by predicted rating, or with
    ``full_catalog`` every item the user has not rated in training, using
    ``model.score_items`` when the model has it.
    """
    test, train = split.test, split.train
    if len(test) == 0:
        raise EmptyInput("empty test set")
    thr = config.relevance_threshold
    known_u = train.user_counts() > 0
    known_i = train.item_counts() > 0
    warm = known_u[test.users] & known_i[test.items]
    cold = int(np.sum(~warm))
    users, items, actual = test.users[warm], test.items[warm], test.ratings[warm]
    flags: set[str] = set()
    if users.size == 0:
        flags.update({"rmse", "auc", "map", "p_at_k"})
        cm = classification_metrics(ConfusionCounts())
        return EvaluationReport(
            cm.precision, cm.recall, cm.f1, cm.accuracy, {k: 0.0 for k in config.ks}, 0.0, 0.0, 0.0, 0.0,
            len(test), 0, 0, cold, config.k, thr, config.full_catalog, config.seed,
            tuple(sorted(flags | cm.degenerate)), name)

    preds = np.asarray(model.predict_many(users, items), dtype=np.float64)
    err = rmse(preds, actual)
    relevant = actual >= thr
    cm = classification_metrics(ConfusionCounts.from_labels(preds >= thr, relevant))
    flags |= cm.degenerate
    try:
        auc = auc_roc(preds, relevant)
    except UndefinedAUC:
        auc = 0.0
        flags.add("auc")

    kmax = max(config.ks)
    judgments: list[RankedJudgments] = []
    rec_lists: list[np.ndarray] = []
    if config.full_catalog:
        train_items_by_user = {}
        for g in _user_groups(train.users):
            train_items_by_user[int(train.users[g[0]])] = train.items[g]
        for g in _user_groups(users):
            u = int(users[g[0]])
            if hasattr(model, "score_items"):
                scores = np.asarray(model.score_items(u), dtype=np.float64)
            else:
                scores = np.asarray(model.predict_many(np.full(train.n_items, u), np.arange(train.n_items)))
            exclude = np.union1d(train_items_by_user.get(u, np.zeros(0, np.int64)), np.flatnonzero(~known_i))
            top = top_k_indices(scores, kmax, exclude)
            rel_items = set(items[g][relevant[g]].tolist())
            judgments.append(RankedJudgments(tuple(int(i) in rel_items for i in top), len(rel_items)))
            rec_lists.append(top)
    else:
        for g in _user_groups(users):
            cand = items[g]
            order = np.lexsort((cand, -preds[g]))[:kmax]
            judgments.append(RankedJudgments(tuple(bool(x) for x in relevant[g][order]), int(relevant[g].sum())))
            rec_lists.append(cand[order])

    p_at = {k: float(np.mean([precision_at_k(j, k) for j in judgments])) for k in config.ks}
    eligible = [j for j in judgments if j.n_relevant > 0]
    if not eligible:
        flags.add("map")
    map_value = mean_average_precision(eligible)
    cov = coverage(rec_lists, train.n_items)
    return EvaluationReport(
        precision=cm.precision, recall=cm.recall, f1=cm.f1, accuracy=cm.accuracy,
        p_at_k=p_at, map=map_value, auc=auc, rmse=err, coverage=cov,
        n_test=len(test), n_evaluated=int(users.size), n_users=len(judgments), cold_start=cold,
        k=config.k, relevance_threshold=thr, full_catalog=config.full_catalog, seed=config.seed,
        degenerate=tuple(sorted(flags)), model=name,
    )


def predict_known(model, dataset, train) -> tuple[np.ndarray, np.ndarray]:
    """Predictions and targets for the rows of ``dataset`` that are warm
    with respect to ``train``."""
    known_u = train.user_counts() > 0
    known_i = train.item_counts() > 0
    warm = known_u[dataset.users] & known_i[dataset.items]
    preds = np.asarray(model.predict_many(dataset.users[warm], dataset.items[warm]), dtype=np.float64)
    return preds, dataset.ratings[warm]
