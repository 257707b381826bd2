"""Command-line driver: ingest, stats, split, train, evaluate, recommend,
tune and segment.

Settings resolve as command-line flags over the JSON config over built-in
defaults. Every random component draws its seed from the experiment seed
and its own name (see :func:`sub_seed`), so a given config and seed always
produce the same artifacts.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import persist
from .core import GlobalMeanModel, RatingDataset, build_matrix, top_k_indices
from .ensemble import (EnsembleSpec, WeightedEnsemble, WeightedHybrid, bagging_fit, boosting_fit,
                       inverse_rmse_weights, stacking_fit)
from .errors import ColdStart, RecEngineError
from .evaluation import EvalConfig, evaluate
from .factor import TrainConfig, fm_fit, mf_fit
from .graph import SlimConfig, SlimRecommender, compute_S, fit_linear_recommender, slim_fit
from .ingest import dataset_stats, format_ratings, parse_items, parse_ratings, parse_transactions
from .segmentation import compute_rfm, kmeans_segment, score_quintiles, segments_csv
from .similarity import knn_fit
from .split import (SplitResult, carve_validation, export_split, kfold, stratified_split, time_split,
                    train_test_split)
from .tuning import HyperGrid, apply_params, grid_search, mf_trainer, random_search

DEFAULTS: dict[str, Any] = {
    "data": {"ratings": None, "items": None, "transactions": None},
    "split": {"strategy": "random", "test_fraction": 0.2, "val_fraction": None, "cutoff": None, "folds": 5},
    "model": None,
    "ensemble": None,
    "evaluation": {"k": 10, "relevance_threshold": 4.0, "full_catalog": False},
    "tuning": {"method": "grid", "metric": "rmse", "grid": None, "space": None, "n_trials": 10,
               "val_fraction": 0.125},
    "segment": {"reference_time": None, "clusters": None},
    "seed": None,
    "out": "out",
}
ALGORITHMS = ("global_mean", "mf", "knn", "fm", "slim", "linear")


class ConfigError(RecEngineError):
    """Invalid or incomplete experiment config; ``path`` names the field."""

    def __init__(self, path: str, problem: str = "missing required field"):
        self.path = path
        super().__init__(f"{problem}: {path}")


def sub_seed(seed: int, component: str) -> int:
    """64-bit seed for ``component``: the first 8 bytes of
    sha256("<seed>:<component>") read big-endian."""
    digest = hashlib.sha256(f"{int(seed)}:{component}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError("config", f"config is not valid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise ConfigError("config", "config must be a JSON object")
    return doc


def resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    cfg = _merge(DEFAULTS, load_config(getattr(args, "config", None)))
    flags = {
        ("seed",): getattr(args, "seed", None),
        ("out",): getattr(args, "out", None),
        ("data", "ratings"): getattr(args, "ratings", None),
        ("data", "items"): getattr(args, "items", None),
        ("data", "transactions"): getattr(args, "transactions", None),
        ("split", "strategy"): getattr(args, "strategy", None),
        ("split", "test_fraction"): getattr(args, "test_fraction", None),
        ("evaluation", "k"): getattr(args, "k", None),
    }
    for path, value in flags.items():
        if value is None:
            continue
        node = cfg
        for key in path[:-1]:
            node = node.setdefault(key, {})
        node[path[-1]] = value
    if getattr(args, "algorithm", None):
        cfg["model"] = {**(cfg.get("model") or {}), "algorithm": args.algorithm}
    return cfg


def require(cfg: dict, path: str) -> Any:
    node: Any = cfg
    for key in path.split("."):
        if not isinstance(node, dict) or node.get(key) is None:
            raise ConfigError(path)
        node = node[key]
    return node


def _seed(cfg: dict) -> int:
    seed = require(cfg, "seed")
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2 ** 64:
        raise ConfigError("seed", "seed must be an unsigned 64-bit integer")
    return seed


def _write(cfg: dict, name: str, text: str) -> Path:
    path = Path(cfg["out"]) / name
    persist.atomic_write_text(path, text)
    return path


def load_ratings(cfg: dict) -> RatingDataset:
    return parse_ratings(require(cfg, "data.ratings"))


def make_split(cfg: dict, dataset: RatingDataset) -> SplitResult:
    sc = cfg["split"]
    seed = sub_seed(_seed(cfg), "split")
    strategy = sc.get("strategy", "random")
    if strategy == "random":
        split = train_test_split(dataset, float(sc["test_fraction"]), seed)
    elif strategy == "stratified":
        split = stratified_split(dataset, float(sc["test_fraction"]), seed)
    elif strategy == "time":
        cutoff = sc.get("cutoff")
        if cutoff is None:
            cutoff = int(np.median(dataset.timestamps))
        split = time_split(dataset, int(cutoff))
    elif strategy == "kfold":
        split = kfold(dataset, int(sc.get("folds", 5)), seed)[0]
    else:
        raise ConfigError("split.strategy", f"unknown strategy {strategy!r}")
    if sc.get("val_fraction"):
        split = carve_validation(split, float(sc["val_fraction"]), sub_seed(_seed(cfg), "validation"))
    return split


def _train_config(params: dict, seed: int) -> TrainConfig:
    return apply_params(TrainConfig(seed=seed), {k: v for k, v in params.items() if k != "seed"})


def build_model(spec: dict, train: RatingDataset, seed: int, path: str = "model"):
    algorithm = spec.get("algorithm")
    if algorithm is None:
        raise ConfigError(f"{path}.algorithm")
    params = dict(spec.get("params") or {})
    if algorithm == "global_mean":
        return GlobalMeanModel.fit(train)
    if algorithm == "mf":
        return mf_fit(train, _train_config(params, seed))
    if algorithm == "fm":
        return fm_fit(train, _train_config(params, seed), train.rating_scale)
    if algorithm == "knn":
        return knn_fit(build_matrix(train), params.get("mode", "item"), int(params.get("neighborhood_size", 50)),
                       float(params.get("shrink", 0.0)))
    if algorithm == "slim":
        matrix = build_matrix(train)
        model = slim_fit(compute_S(matrix), int(params.get("rank", 10)), float(params.get("reg", 0.1)),
                         SlimConfig(max_iters=int(params.get("max_iters", 200)), seed=seed), train.rating_scale)
        return SlimRecommender(model, matrix)
    if algorithm == "linear":
        return fit_linear_recommender(train, float(params.get("reg", 1.0)))
    raise ConfigError(f"{path}.algorithm", f"unknown algorithm {algorithm!r} (choose from {', '.join(ALGORITHMS)})")


def build_ensemble(ecfg: dict, cfg: dict, train: RatingDataset, seed: int):
    scheme = ecfg.get("scheme")
    if scheme is None:
        raise ConfigError("ensemble.scheme")
    members = ecfg.get("members") or []
    spec = EnsembleSpec(scheme, tuple(m.get("algorithm", "") for m in members),
                        tuple(ecfg["weights"]) if ecfg.get("weights") is not None else None,
                        int(ecfg.get("n", 5)), int(ecfg.get("rounds", 5)), float(ecfg.get("shrinkage", 1.0)),
                        float(ecfg.get("beta", 0.5)), float(ecfg.get("meta_reg", 1e-3)), int(ecfg.get("folds", 5)))
    base = _train_config(ecfg.get("params") or {}, seed)
    if scheme == "bagging":
        return bagging_fit(train, base, spec.n, sub_seed(seed, "bagging"))
    if scheme == "boosting":
        params = {"optimizer": "als", **(ecfg.get("params") or {})}
        return boosting_fit(train, _train_config(params, seed), spec.rounds, spec.shrinkage)
    if len(members) == 0:
        raise ConfigError("ensemble.members")
    member_seeds = [sub_seed(seed, f"member{k}") for k in range(len(members))]
    if scheme == "stacking":
        factories = [lambda d, m=m, s=s, k=k: build_model(m, d, s, f"ensemble.members[{k}]")
                     for k, (m, s) in enumerate(zip(members, member_seeds))]
        return stacking_fit(train, factories, sub_seed(seed, "stacking"), spec.folds, spec.meta_reg)
    if scheme == "weighted":
        if spec.weights is not None:
            fitted = [build_model(m, train, s, f"ensemble.members[{k}]")
                      for k, (m, s) in enumerate(zip(members, member_seeds))]
            return WeightedEnsemble(fitted, spec.weights, train.rating_scale)
        # dynamic weights: inverse RMSE on a validation carve of train
        inner = carve_validation(SplitResult(train, train), 0.125, sub_seed(seed, "weights"))
        probe = [build_model(m, inner.train, s) for m, s in zip(members, member_seeds)]
        warm = (inner.train.user_counts()[inner.validation.users] > 0) & \
               (inner.train.item_counts()[inner.validation.items] > 0)
        w = inverse_rmse_weights(probe, inner.validation.subset(np.flatnonzero(warm)))
        fitted = [build_model(m, train, s) for m, s in zip(members, member_seeds)]
        return WeightedEnsemble(fitted, w, train.rating_scale)
    if scheme == "hybrid":
        catalog = parse_items(require(cfg, "data.items"))
        cf = build_model(members[0], train, member_seeds[0], "ensemble.members[0]")
        return WeightedHybrid(cf, train, catalog, spec.beta)
    raise ConfigError("ensemble.scheme", f"unknown scheme {scheme!r}")


def fit_from_config(cfg: dict, train: RatingDataset):
    seed = sub_seed(_seed(cfg), "model")
    has_model, has_ens = cfg.get("model") is not None, cfg.get("ensemble") is not None
    if has_model == has_ens:
        raise ConfigError("model", "exactly one of model or ensemble is required")
    if has_ens:
        return build_ensemble(cfg["ensemble"], cfg, train, seed)
    return build_model(cfg["model"], train, seed)


def _kv(d: dict, prefix: str = "") -> list[str]:
    lines = []
    for k in sorted(d, key=str):
        v = d[k]
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            lines += _kv(v, key + ".")
        else:
            lines.append(f"{key}={v!r}" if isinstance(v, float) else f"{key}={v}")
    return lines


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(cfg: dict, args) -> int:
    ds = load_ratings(cfg)
    _write(cfg, "ratings.tsv", format_ratings(ds))
    stats = dataset_stats(ds).as_dict()
    _write(cfg, "stats.json", json.dumps(stats, sort_keys=True, indent=2) + "\n")
    if cfg["data"].get("items"):
        catalog = parse_items(cfg["data"]["items"])
        print(f"items={len(catalog)}")
    print(f"interactions={len(ds)}\nusers={ds.n_users}\nitems_rated={ds.n_items}")
    return 0


def cmd_stats(cfg: dict, args) -> int:
    stats = dataset_stats(load_ratings(cfg)).as_dict()
    print("\n".join(_kv(stats)))
    if args.out is not None:
        _write(cfg, "stats.json", json.dumps(stats, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_split(cfg: dict, args) -> int:
    split = make_split(cfg, load_ratings(cfg))
    export_split(split, Path(cfg["out"]) / "split")
    print(f"train={len(split.train)}\ntest={len(split.test)}")
    if split.validation is not None:
        print(f"validation={len(split.validation)}")
    return 0


def _meta(cfg: dict, split: SplitResult) -> dict:
    return {"seed": _seed(cfg), "user_ids": np.asarray(split.train.user_ids),
            "item_ids": np.asarray(split.train.item_ids),
            "config": json.dumps({k: v for k, v in cfg.items() if k != "out"}, sort_keys=True)}


def cmd_train(cfg: dict, args) -> int:
    ds = load_ratings(cfg)
    if cfg.get("model") is None and cfg.get("ensemble") is None:
        raise ConfigError("model")
    split = make_split(cfg, ds)
    model = fit_from_config(cfg, split.train)
    path = Path(cfg["out"]) / "model.json"
    persist.save_model(model, path, _meta(cfg, split))
    print(f"model={path}")
    return 0


def _eval_config(cfg: dict) -> EvalConfig:
    ec = cfg["evaluation"]
    return EvalConfig(k=int(ec["k"]), relevance_threshold=float(ec["relevance_threshold"]),
                      full_catalog=bool(ec.get("full_catalog", False)), seed=_seed(cfg))


def _model_for(cfg: dict, args, split: SplitResult):
    if getattr(args, "model", None):
        model, _ = persist.load_model(args.model)
        return model
    return fit_from_config(cfg, split.train)


def cmd_evaluate(cfg: dict, args) -> int:
    ds = load_ratings(cfg)
    split = make_split(cfg, ds)
    model = _model_for(cfg, args, split)
    name = (cfg.get("model") or {}).get("algorithm") or (cfg.get("ensemble") or {}).get("scheme", "")
    report = evaluate(model, split, _eval_config(cfg), name=name)
    _write(cfg, "report.json", report.to_json())
    _write(cfg, "report.txt", report.to_text())
    sys.stdout.write(report.to_text())
    return 0


def cmd_recommend(cfg: dict, args) -> int:
    ds = load_ratings(cfg)
    split = make_split(cfg, ds)
    model = _model_for(cfg, args, split)
    train = split.train
    try:
        user = train.user_index[int(args.user)]
    except KeyError:
        raise ColdStart(f"user {args.user} has no training history") from None
    if hasattr(model, "score_items"):
        scores = np.asarray(model.score_items(user), dtype=np.float64)
    else:
        scores = model.predict_many(np.full(train.n_items, user), np.arange(train.n_items))
    rated = train.items[train.users == user]
    unseen = np.flatnonzero(train.item_counts() == 0)
    top = top_k_indices(scores, int(args.k), np.union1d(rated, unseen))
    lines = [f"{int(train.item_ids[i])}\t{float(scores[i])!r}" for i in top]
    text = "item_id\tscore\n" + "".join(line + "\n" for line in lines)
    _write(cfg, f"recommendations_{args.user}.tsv", text)
    sys.stdout.write(text)
    return 0


def cmd_tune(cfg: dict, args) -> int:
    ds = load_ratings(cfg)
    split = make_split(cfg, ds)
    tc = cfg["tuning"]
    if split.validation is None:
        split = carve_validation(split, float(tc.get("val_fraction", 0.125)), sub_seed(_seed(cfg), "validation"))
    base = _train_config((cfg.get("model") or {}).get("params") or {}, sub_seed(_seed(cfg), "model"))
    trainer = mf_trainer(base)
    metric = tc.get("metric", "rmse")
    if tc.get("method", "grid") == "grid":
        grid = HyperGrid(require(cfg, "tuning.grid"))
        result = grid_search(trainer, grid, split.train, split.validation, metric)
    elif tc["method"] == "random":
        # [lo, hi] is a range; {"choices": [...]} picks from a list
        space = {k: list(v["choices"]) if isinstance(v, dict) else tuple(v)
                 for k, v in require(cfg, "tuning.space").items()}
        result = random_search(trainer, space, int(tc.get("n_trials", 10)), sub_seed(_seed(cfg), "tuning"),
                               split.train, split.validation, metric)
    else:
        raise ConfigError("tuning.method", f"unknown method {tc['method']!r}")
    _write(cfg, "tuning.csv", result.to_csv())
    best = json.dumps(result.best_params, sort_keys=True)
    print(f"best={best}\n{metric}={result.best_value!r}")
    return 0


def cmd_segment(cfg: dict, args) -> int:
    log = parse_transactions(require(cfg, "data.transactions"))
    sc = cfg["segment"]
    scored = score_quintiles(compute_rfm(log, sc.get("reference_time")))
    _write(cfg, "segments.csv", segments_csv(scored))
    clusters = args.clusters if args.clusters is not None else sc.get("clusters")
    if clusters:
        km = kmeans_segment(list(scored), int(clusters), sub_seed(_seed(cfg), "kmeans"))
        rows = "".join(f"{p.customer_id},{int(c)}\n" for p, c in zip(scored, km.labels))
        _write(cfg, "clusters.csv", "customer_id,cluster\n" + rows)
        print(f"inertia={km.inertia!r}")
    print(f"customers={len(scored)}")
    if scored.reduced:
        print(f"warning: only {scored.n_buckets} score buckets (fewer than 5 customers)", file=sys.stderr)
    return 0


COMMANDS = {
    "ingest": cmd_ingest, "stats": cmd_stats, "split": cmd_split, "train": cmd_train,
    "evaluate": cmd_evaluate, "recommend": cmd_recommend, "tune": cmd_tune, "segment": cmd_segment,
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    kw = {"default": argparse.SUPPRESS} if suppress else {"default": None}
    p.add_argument("--config", help="experiment config (JSON)", **kw)
    p.add_argument("--seed", type=int, help="experiment seed (unsigned 64-bit)", **kw)
    p.add_argument("--out", help="output directory", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recengine", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--ratings", help="u.data-style ratings file")
    data.add_argument("--items", help="u.item-style catalog")
    splitting = argparse.ArgumentParser(add_help=False)
    splitting.add_argument("--strategy", choices=["random", "stratified", "time", "kfold"])
    splitting.add_argument("--test-fraction", type=float)
    modeling = argparse.ArgumentParser(add_help=False)
    modeling.add_argument("--algorithm", choices=ALGORITHMS)
    modeling.add_argument("--model", help="load a saved model instead of training")

    specs = {
        "ingest": ([data], "parse and validate input files"),
        "stats": ([data], "print dataset statistics"),
        "split": ([data, splitting], "write train/test (and validation) files"),
        "train": ([data, splitting, modeling], "fit a model and save it"),
        "evaluate": ([data, splitting, modeling], "fit (or load) and evaluate on the test split"),
        "recommend": ([data, splitting, modeling], "top-k items for one user"),
        "tune": ([data, splitting], "grid or random hyperparameter search"),
        "segment": ([], "RFM scores and segments from a transaction CSV"),
    }
    for name, (parents, help_text) in specs.items():
        p = sub.add_parser(name, parents=parents, help=help_text)
        _add_globals(p, suppress=True)
        if name in ("evaluate",):
            p.add_argument("--k", type=int, help="ranking cutoff")
        if name == "recommend":
            p.add_argument("--user", required=True, help="raw user id")
            p.add_argument("--k", type=int, required=True, help="list length")
        if name == "segment":
            p.add_argument("--transactions", help="customer_id,timestamp,amount CSV")
            p.add_argument("--clusters", type=int, help="also run k-means with this many clusters")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        if cfg.get("out") is None:
            cfg["out"] = DEFAULTS["out"]
        return COMMANDS[args.command](cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    except (RecEngineError, ValueError, KeyError, OSError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
