"""Readers and writers for MovieLens-100K files and transaction CSVs, plus
descriptive statistics of a rating dataset."""
from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import IO, Iterable, Mapping

import numpy as np

from .core import DEFAULT_SCALE, RatingDataset
from .errors import EmptyDataset, ParseError

N_GENRES = 19
ITEM_HEAD_FIELDS = 5  # id | title | release date | video release date | url

Source = str | os.PathLike | IO[str] | Iterable[str]


def _lines(source: Source, encoding: str = "utf-8", errors: str = "strict"):
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding=encoding, errors=errors, newline="") as fh:
            yield from fh
    else:
        yield from source


@dataclass(frozen=True)
class ItemFeatures:
    item_id: int
    feature_vector: np.ndarray
    title: str | None = None
    release_year: int | None = None


@dataclass(frozen=True)
class TransactionRecord:
    customer_id: str
    timestamp: float
    amount: float


@dataclass(frozen=True)
class TransactionLog:
    records: tuple[TransactionRecord, ...]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)


@dataclass(frozen=True)
class StatsSummary:
    n_interactions: int
    n_users: int
    n_items: int
    mean: float
    median: float
    std: float
    sparsity: float
    rating_counts: Mapping[float, int] = field(default_factory=dict)
    user_activity: Mapping[str, float] = field(default_factory=dict)
    item_popularity: Mapping[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "n_interactions": self.n_interactions,
            "n_users": self.n_users,
            "n_items": self.n_items,
            "mean": self.mean,
            "median": self.median,
            "std": self.std,
            "sparsity": self.sparsity,
            "rating_counts": {_num_key(k): v for k, v in sorted(self.rating_counts.items())},
            "user_activity": dict(self.user_activity),
            "item_popularity": dict(self.item_popularity),
        }


def _num_key(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def parse_ratings(source: Source, rating_scale: tuple[float, float] = DEFAULT_SCALE) -> RatingDataset:
    """Parse ``user<TAB>item<TAB>rating<TAB>timestamp`` lines.

    Blank lines are skipped. Duplicate (user, item) pairs are rejected.
    """
    users, items, ratings, stamps = [], [], [], []
    for lineno, line in enumerate(_lines(source), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ParseError(f"expected 4 tab-separated fields, got {len(parts)}", lineno)
        try:
            u, i, t = int(parts[0]), int(parts[1]), int(parts[3])
            r = float(parts[2])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not rating_scale[0] <= r <= rating_scale[1]:
            raise ParseError(f"rating {r} outside scale {rating_scale}", lineno)
        if t < 0:
            raise ParseError("negative timestamp", lineno)
        users.append(u)
        items.append(i)
        ratings.append(r)
        stamps.append(t)
    if not users:
        raise EmptyDataset("no interactions in input")
    return RatingDataset(users, items, ratings, stamps, rating_scale=rating_scale)


def _fmt_rating(r: float) -> str:
    return str(int(r)) if float(r).is_integer() else repr(float(r))


def write_ratings(dataset: RatingDataset, dest: str | os.PathLike | IO[str]) -> None:
    """Inverse of :func:`parse_ratings`."""
    lines = (
        f"{u}\t{i}\t{_fmt_rating(r)}\t{t}\n"
        for u, i, r, t in zip(dataset.raw_users.tolist(), dataset.raw_items.tolist(),
                              dataset.ratings.tolist(), dataset.timestamps.tolist())
    )
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            fh.writelines(lines)
    else:
        dest.writelines(lines)


def format_ratings(dataset: RatingDataset) -> str:
    buf = io.StringIO()
    write_ratings(dataset, buf)
    return buf.getvalue()


def _release_year(text: str) -> int | None:
    text = text.strip()
    if len(text) >= 4 and text[-4:].isdigit():
        return int(text[-4:])
    return None


def parse_items(source: Source, n_genres: int = N_GENRES) -> dict[int, ItemFeatures]:
    """Parse a pipe-separated ``u.item`` catalog keyed by item id.

    Paths are decoded as latin-1, which maps every byte, so legacy titles
    never abort parsing.
    """
    catalog: dict[int, ItemFeatures] = {}
    for lineno, line in enumerate(_lines(source, encoding="latin-1"), start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        parts = line.split("|")
        if len(parts) != ITEM_HEAD_FIELDS + n_genres:
            raise ParseError(
                f"expected {n_genres} genre flags after {ITEM_HEAD_FIELDS} header fields, "
                f"got {len(parts) - ITEM_HEAD_FIELDS}", lineno)
        flags = parts[ITEM_HEAD_FIELDS:]
        if any(f not in ("0", "1") for f in flags):
            raise ParseError("genre flags must be 0 or 1", lineno)
        try:
            item_id = int(parts[0])
        except ValueError:
            raise ParseError(f"bad item id {parts[0]!r}", lineno) from None
        vec = np.array([int(f) for f in flags], dtype=np.float64)
        vec.setflags(write=False)
        catalog[item_id] = ItemFeatures(item_id, vec, parts[1] or None, _release_year(parts[2]))
    return catalog


def catalog_matrix(catalog: Mapping[int, ItemFeatures], item_ids: np.ndarray) -> np.ndarray:
    """Feature rows aligned with a dataset's dense item index (zeros if missing)."""
    width = len(next(iter(catalog.values())).feature_vector) if catalog else 0
    out = np.zeros((len(item_ids), width))
    for d, raw in enumerate(np.asarray(item_ids).tolist()):
        feat = catalog.get(raw)
        if feat is not None:
            out[d] = feat.feature_vector
    return out


def parse_timestamp(text: str) -> float:
    """Integer epoch seconds or an RFC-3339 datetime (``Z`` allowed)."""
    text = text.strip()
    try:
        return float(int(text))
    except ValueError:
        pass
    iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    dt = datetime.fromisoformat(iso)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


TRANSACTION_HEADER = ["customer_id", "timestamp", "amount"]


def parse_transactions(source: Source) -> TransactionLog:
    reader = csv.reader(_lines(source))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != TRANSACTION_HEADER:
        raise ParseError(f"header must be {','.join(TRANSACTION_HEADER)}", 1)
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 fields, got {len(row)}", lineno)
        cid, ts, amt = (c.strip() for c in row)
        try:
            when = parse_timestamp(ts)
        except ValueError:
            raise ParseError(f"unparseable timestamp {ts!r}", lineno) from None
        try:
            amount = float(amt)
        except ValueError:
            raise ParseError(f"unparseable amount {amt!r}", lineno) from None
        if amount < 0:
            raise ValueError(f"line {lineno}: negative amount {amount}")
        records.append(TransactionRecord(cid, when, amount))
    return TransactionLog(tuple(records))


def dataset_stats(dataset: RatingDataset) -> StatsSummary:
    """Population statistics of the ratings plus sparsity of R."""
    if len(dataset) == 0:
        raise EmptyDataset("statistics of an empty dataset")
    r = dataset.ratings
    per_user = dataset.user_counts()
    per_item = dataset.item_counts()
    values, counts = np.unique(r, return_counts=True)
    return StatsSummary(
        n_interactions=len(dataset),
        n_users=dataset.n_users,
        n_items=dataset.n_items,
        mean=float(np.mean(r)),
        median=float(np.median(r)),
        std=float(np.std(r)),
        sparsity=1.0 - len(dataset) / (dataset.n_users * dataset.n_items),
        rating_counts=dict(zip(values.tolist(), counts.tolist())),
        user_activity=_describe(per_user),
        item_popularity=_describe(per_item),
    )


def _describe(counts: np.ndarray) -> dict[str, float]:
    return {
        "mean": float(np.mean(counts)),
        "median": float(np.median(counts)),
        "std": float(np.std(counts)),
        "min": float(np.min(counts)),
        "max": float(np.max(counts)),
    }

