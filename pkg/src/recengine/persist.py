"""Versioned JSON container for fitted models, plus atomic file writes.

Arrays are stored as base64 of their little-endian bytes with dtype and
shape, floats via ``repr``, so a save/load round trip is bit-exact and two
saves of equal models are byte-identical.
"""
from __future__ import annotations

import base64
import dataclasses
import json
import os
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

from .core import GlobalMeanModel, RatingDataset, SparseRatingMatrix
from .ensemble import BaggingEnsemble, BoostingEnsemble, StackingEnsemble, WeightedEnsemble, WeightedHybrid
from .errors import InvalidConfig
from .factor import FMLayout, FMModel, MFModel, TensorModel, TimeBinner
from .ingest import ItemFeatures
from .graph import InteractionFeatures, LinearModel, LinearRecommender, SlimModel, SlimRecommender
from .similarity import KNNModel, SimilarityMatrix

FORMAT = "recengine-model"
VERSION = 1

_TYPES = {cls.__name__: cls for cls in (
    GlobalMeanModel, MFModel, TensorModel, TimeBinner, FMModel, FMLayout, KNNModel, SimilarityMatrix,
    SlimModel, SlimRecommender, LinearModel, LinearRecommender, InteractionFeatures,
    WeightedEnsemble, BaggingEnsemble, BoostingEnsemble, StackingEnsemble, WeightedHybrid, ItemFeatures,
)}
# per-type fields rebuilt empty instead of stored (caches)
_TRANSIENT = {"WeightedHybrid": {"_profiles": dict}}


def _encode(obj: Any) -> Any:
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        a = np.ascontiguousarray(obj)
        if a.dtype.byteorder == ">":
            a = a.astype(a.dtype.newbyteorder("<"))
        return {"__ndarray__": base64.b64encode(a.tobytes()).decode("ascii"),
                "dtype": a.dtype.str, "shape": list(a.shape)}
    if isinstance(obj, tuple):
        return {"__tuple__": [_encode(x) for x in obj]}
    if isinstance(obj, list):
        return [_encode(x) for x in obj]
    if isinstance(obj, dict):
        return {"__dict__": [[_encode(k), _encode(v)] for k, v in obj.items()]}
    if isinstance(obj, SparseRatingMatrix):
        return {"__type__": "SparseRatingMatrix", "fields": {
            "rows": _encode(np.asarray(obj.rows)), "cols": _encode(np.asarray(obj.cols)),
            "values": _encode(np.asarray(obj.values)), "n_users": obj.n_users, "n_items": obj.n_items,
            "rating_scale": _encode(obj.rating_scale)}}
    if isinstance(obj, RatingDataset):
        return {"__type__": "RatingDataset", "fields": {
            k: _encode(np.asarray(getattr(obj, k)))
            for k in ("raw_users", "raw_items", "ratings", "timestamps", "user_ids", "item_ids")}
            | {"rating_scale": _encode(obj.rating_scale)}}
    name = type(obj).__name__
    if dataclasses.is_dataclass(obj) and _TYPES.get(name) is type(obj):
        skip = _TRANSIENT.get(name, {})
        return {"__type__": name, "fields": {f.name: _encode(getattr(obj, f.name))
                                            for f in dataclasses.fields(obj) if f.name not in skip}}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _decode(obj: Any) -> Any:
    if isinstance(obj, list):
        return [_decode(x) for x in obj]
    if not isinstance(obj, dict):
        return obj
    if "__ndarray__" in obj:
        raw = base64.b64decode(obj["__ndarray__"])
        return np.frombuffer(raw, dtype=np.dtype(obj["dtype"])).reshape(obj["shape"]).copy()
    if "__tuple__" in obj:
        return tuple(_decode(x) for x in obj["__tuple__"])
    if "__dict__" in obj:
        return {_decode(k): _decode(v) for k, v in obj["__dict__"]}
    if "__type__" in obj:
        name = obj["__type__"]
        fields = {k: _decode(v) for k, v in obj["fields"].items()}
        if name == "SparseRatingMatrix":
            return SparseRatingMatrix(**fields)
        if name == "RatingDataset":
            return RatingDataset(**fields)
        cls = _TYPES.get(name)
        if cls is None:
            raise InvalidConfig(f"unknown model type {name!r} in container")
        # bypass __init__/__post_init__ so stored values come back untouched
        inst = object.__new__(cls)
        for k, v in fields.items():
            object.__setattr__(inst, k, v)
        for k, factory in _TRANSIENT.get(name, {}).items():
            object.__setattr__(inst, k, factory())
        return inst
    raise InvalidConfig("malformed container entry")


def dumps_model(model: Any, meta: dict | None = None) -> str:
    doc = {"format": FORMAT, "version": VERSION, "kind": type(model).__name__,
           "meta": _encode(meta or {}), "model": _encode(model)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads_model(text: str) -> tuple[Any, dict]:
    doc = json.loads(text)
    if doc.get("format") != FORMAT:
        raise InvalidConfig("not a recengine model container")
    if doc.get("version") != VERSION:
        raise InvalidConfig(f"unsupported container version {doc.get('version')}")
    return _decode(doc["model"]), _decode(doc["meta"])


def save_model(model: Any, path: str | os.PathLike, meta: dict | None = None) -> None:
    atomic_write_text(path, dumps_model(model, meta))


def load_model(path: str | os.PathLike) -> tuple[Any, dict]:
    return loads_model(Path(path).read_text(encoding="utf-8"))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the target directory, then rename over it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
