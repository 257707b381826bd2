"""RFM profiles, quintile scores, named segments and k-means clustering.

Scores run from 1 (best) to 5 (worst) on every attribute: recent, frequent
and high-spending customers get 1s.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyInput, InvalidK, InvalidReference
from .ingest import TransactionLog

SECONDS_PER_DAY = 86400.0
N_BUCKETS = 5
UNLABELED = "Unlabeled"
CSV_HEADER = ["customer_id", "recency", "frequency", "monetary", "r", "f", "m", "segment"]


@dataclass(frozen=True)
class RFMProfile:
    customer_id: str
    recency: float  # days since the last purchase
    frequency: int
    monetary: float
    r: int | None = None
    f: int | None = None
    m: int | None = None

    @property
    def scores(self) -> tuple[int, int, int] | None:
        if self.r is None:
            return None
        return (self.r, self.f, self.m)

    def vector(self) -> np.ndarray:
        return np.array([self.recency, self.frequency, self.monetary], dtype=np.float64)


@dataclass(frozen=True)
class Segment:
    name: str
    pattern: tuple[int, int, int]
    description: str


# Patterns copied as published, including rows whose scores and descriptions
# disagree (Big spenders: F=4 yet "infrequently" fits; Lost customers: F=1).
SEGMENTS: tuple[Segment, ...] = (
    Segment("Best customers", (1, 1, 1), "Bought most recently, most often, and spend the most."),
    Segment("Loyal customers", (2, 2, 3), "Buy on a regular basis. Responsive to promotions."),
    Segment("Big spenders", (1, 4, 1), "Spend big money but do so infrequently."),
    Segment("Almost lost", (3, 2, 4), "Haven't purchased for some time but spent a lot when did."),
    Segment("Lost customers", (4, 1, 5), "Haven't purchased for the longest time, but spent a lot when they did."),
    Segment("Inactive customers", (5, 5, 5), "Last purchased a long time ago and spent little."),
)
_BY_PATTERN = {s.pattern: s for s in SEGMENTS}


def compute_rfm(log: TransactionLog, reference_time: float | None = None) -> list[RFMProfile]:
    """Per-customer recency (days), purchase count and total spend.

    ``reference_time`` (epoch seconds) defaults to the latest transaction.
    Profiles come back sorted by customer id.
    """
    if len(log) == 0:
        raise EmptyInput("empty transaction log")
    ts = np.array([r.timestamp for r in log], dtype=np.float64)
    latest = float(ts.max())
    if reference_time is None:
        reference_time = latest
    if reference_time < latest:
        raise InvalidReference(f"reference time {reference_time} precedes a transaction at {latest}")
    last: dict[str, float] = {}
    count: dict[str, int] = {}
    spend: dict[str, float] = {}
    for rec in log:
        c = rec.customer_id
        last[c] = max(last.get(c, rec.timestamp), rec.timestamp)
        count[c] = count.get(c, 0) + 1
        spend[c] = spend.get(c, 0.0) + rec.amount
    return [RFMProfile(c, (reference_time - last[c]) / SECONDS_PER_DAY, count[c], spend[c]) for c in sorted(last)]


def rank_buckets(values: Sequence[float], higher_is_better: bool, n_buckets: int = N_BUCKETS) -> np.ndarray:
    """Bucket 1..n_buckets by rank, best first. Tied values share the better
    bucket; with n values, rank r (0-based) lands in floor(n_buckets*r/n)+1."""
    v = np.asarray(values, dtype=np.float64)
    key = -v if higher_is_better else v
    r = rankdata(key, method="min").astype(np.int64) - 1
    return (n_buckets * r) // v.size + 1


@dataclass(frozen=True)
class ScoredProfiles:
    profiles: tuple[RFMProfile, ...]
    n_buckets: int

    @property
    def reduced(self) -> bool:
        """True when fewer than five customers forced fewer buckets."""
        return self.n_buckets < N_BUCKETS

    def __iter__(self):
        return iter(self.profiles)

    def __len__(self) -> int:
        return len(self.profiles)

    def __getitem__(self, i):
        return self.profiles[i]


def score_quintiles(profiles: Sequence[RFMProfile]) -> ScoredProfiles:
    """Rank each attribute into quintiles: low recency, high frequency and
    high monetary value score 1."""
    profiles = list(profiles)
    if not profiles:
        raise EmptyInput("no profiles to score")
    nb = min(N_BUCKETS, len(profiles))
    r = rank_buckets([p.recency for p in profiles], False, nb)
    f = rank_buckets([p.frequency for p in profiles], True, nb)
    m = rank_buckets([p.monetary for p in profiles], True, nb)
    scored = tuple(replace(p, r=int(a), f=int(b), m=int(c)) for p, a, b, c in zip(profiles, r, f, m))
    return ScoredProfiles(scored, nb)


def assign_segment(profile: RFMProfile | tuple[int, int, int]) -> Segment | None:
    """Exact pattern lookup; ``None`` means unlabeled."""
    scores = profile if isinstance(profile, tuple) else profile.scores
    if scores is None:
        raise ValueError("profile has no scores; run score_quintiles first")
    return _BY_PATTERN.get(tuple(int(s) for s in scores))


def segment_name(profile: RFMProfile) -> str:
    seg = assign_segment(profile)
    return seg.name if seg is not None else UNLABELED


@dataclass(frozen=True)
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray  # in standardized feature space
    centroids_raw: np.ndarray  # per-cluster means in the original units
    inertia_trace: tuple[float, ...]
    n_iter: int

    @property
    def inertia(self) -> float:
        return self.inertia_trace[-1]


def standardize(X: np.ndarray) -> np.ndarray:
    """Column z-scores with population std; constant columns become 0."""
    X = np.asarray(X, dtype=np.float64)
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    return np.divide(X - mu, sd, out=np.zeros_like(X), where=sd > 0)


def _sq_dists(Z: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((Z[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def kmeans(X, k: int, seed: int = 0, max_iters: int = 100, standardize_features: bool = True) -> KMeansResult:
    """Lloyd iterations from ``k`` distinct data points drawn under ``seed``.

    The trace records inertia after every assignment step. An emptied
    cluster keeps its previous centroid.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyInput("need a non-empty 2-D point array")
    Z = standardize(X) if standardize_features else X
    distinct = np.unique(Z, axis=0)
    if not 1 <= k <= distinct.shape[0]:
        raise InvalidK(f"k must lie in [1, {distinct.shape[0]}] distinct points, got {k}")
    rng = np.random.default_rng(seed)
    C = distinct[np.sort(rng.choice(distinct.shape[0], size=k, replace=False))].copy()
    labels = None
    trace = []
    it = 0
    for it in range(1, max_iters + 1):
        d = _sq_dists(Z, C)
        new = np.argmin(d, axis=1)
        trace.append(float(d[np.arange(len(Z)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            members = labels == c
            if members.any():
                C[c] = Z[members].mean(axis=0)
    d = _sq_dists(Z, C)
    labels = np.argmin(d, axis=1)
    final = float(d[np.arange(len(Z)), labels].sum())
    if final < trace[-1]:
        trace.append(final)
    raw = np.array([X[labels == c].mean(axis=0) if np.any(labels == c) else np.full(X.shape[1], np.nan)
                    for c in range(k)])
    return KMeansResult(labels, C, raw, tuple(trace), it)


def kmeans_segment(profiles: Sequence[RFMProfile], k: int, seed: int = 0, max_iters: int = 100) -> KMeansResult:
    """k-means on z-scored (recency, frequency, monetary) vectors."""
    if not profiles:
        raise EmptyInput("no profiles to cluster")
    return kmeans(np.vstack([p.vector() for p in profiles]), k, seed, max_iters)


def segments_csv(profiles: Iterable[RFMProfile]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in profiles:
        w.writerow([p.customer_id, repr(float(p.recency)), p.frequency, repr(float(p.monetary)),
                    p.r, p.f, p.m, segment_name(p)])
    return buf.getvalue()
