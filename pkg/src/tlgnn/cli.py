"""Command-line entry point: enumerate, spng, train, eval, depth-sweep.

Every command writes ``config.resolved`` (flat key=value) into its output
directory before doing any real work. Parameters resolve as
defaults < ``--config`` file < explicit flags.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import fields
from typing import Optional, Sequence

import numpy as np

from .generated import SUPERNODE_ENCODINGS
from .graph import Dataset, IngestionError, OracleBudgetError, _atomic_write, load_tu_dataset, write_tu_dataset
from .model import (VARIANTS, CvResult, TlgnnConfig, attention_csv, cross_validate, evaluate, load_checkpoint,
                    metrics_csv, prepare, save_checkpoint, train)
from .nn import DivergenceError
from .png import GenerationBudgetError, PngPair, generate_spng, pair_separation_score, pairs_from_dataset, pairs_sidecar
from .subgraphs import (SubgraphRecord, census_csv, count_trees, enumerate_paths_circuits, subgraph_census)

log = logging.getLogger("tlgnn")

EXIT_OK = 0
EXIT_CONFIG = 3
EXIT_INGESTION = 4
EXIT_GENERATION = 5
EXIT_DIVERGENCE = 6


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config handling


def read_config_file(path: str) -> dict[str, str]:
    out = {}
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip().replace("-", "_")] = v.strip()
    return out


def _coerce(value, like):
    if isinstance(value, str):
        if isinstance(like, bool):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ConfigError(f"not a boolean: {value!r}")
        try:
            if isinstance(like, int):
                return int(value)
            if isinstance(like, float):
                return float(value)
        except ValueError as e:
            raise ConfigError(str(e)) from e
    return value


def resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, config file and explicitly given flags."""
    out = dict(defaults)
    if getattr(args, "config", None):
        for k, v in read_config_file(args.config).items():
            if k not in out:
                raise ConfigError(f"unknown config key {k!r}")
            out[k] = _coerce(v, out[k]) if out[k] is not None else v
    for k, v in vars(args).items():
        if k in out and v is not None:
            out[k] = v
    return out


def write_resolved(out_dir: str, resolved: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    text = "".join(f"{k}={'' if v is None else v}\n" for k, v in sorted(resolved.items()))
    _atomic_write(os.path.join(out_dir, "config.resolved"), text)


def model_config(resolved: dict) -> TlgnnConfig:
    variant = resolved.get("variant") or "tlgnn"
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}")
    names = {f.name for f in fields(TlgnnConfig)} - {"agg_sub", "merge", "subgraph_branch"}
    try:
        return TlgnnConfig.for_variant(variant, **{k: resolved[k] for k in names if k in resolved})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


MODEL_DEFAULTS = {f.name: f.default for f in fields(TlgnnConfig)
                  if f.name not in ("agg_sub", "merge", "subgraph_branch")}


# --------------------------------------------------------------------------
# datasets and enumeration cache


def load_dataset(spec: str, seed: int, degree_features: bool = False) -> tuple[Dataset, Optional[list[PngPair]]]:
    """``SPNG`` generates the default synthetic set; anything else is a TU directory."""
    if spec == "SPNG":
        return generate_spng(seed=seed)
    directory = spec.rstrip("/")
    name = os.path.basename(directory)
    ds = load_tu_dataset(directory, name, degree_features)
    side = os.path.join(directory, f"{name}_pairs.json")
    pairs = None
    if os.path.exists(side):
        with open(side) as fh:
            pairs = pairs_from_dataset(ds, json.load(fh))
    return ds, pairs


def dataset_hash(ds: Dataset) -> str:
    h = hashlib.sha256()
    for g in ds:
        h.update(json.dumps(g.to_json(), sort_keys=True).encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def enumerate_dataset(ds: Dataset, depth: int, threshold: int, cache_dir: Optional[str] = None,
                      inclusive: bool = False) -> tuple[list[list[SubgraphRecord]], list[dict]]:
    """Records per graph plus per-graph timing rows; cached on disk when ``cache_dir`` is set."""
    path = None
    if cache_dir:
        key = f"{dataset_hash(ds)}_D{depth}_t{threshold}{'i' if inclusive else ''}"
        path = os.path.join(cache_dir, f"records_{key}.json")
        if os.path.exists(path):
            with open(path) as fh:
                blob = json.load(fh)
            recs = [[SubgraphRecord.make(k, n) for k, n in graph] for graph in blob["records"]]
            return recs, blob["timing"]
    recs, timing = [], []
    for i, g in enumerate(ds):
        t0 = time.perf_counter()
        trees, state = count_trees(g, threshold, inclusive)
        pc = enumerate_paths_circuits(g, depth, state)
        recs.append(trees + pc)
        timing.append({"graph": i, "n": g.node_count, "m": g.edge_count, "records": len(trees) + len(pc),
                       "operations": state.operations, "seconds": time.perf_counter() - t0})
    if path:
        os.makedirs(cache_dir, exist_ok=True)
        blob = {"records": [[[r.kind.value, list(r.nodes)] for r in graph] for graph in recs], "timing": timing}
        _atomic_write(path, json.dumps(blob))
    return recs, timing


def _inputs(ds: Dataset, config: TlgnnConfig, cache_dir: Optional[str]):
    recs, _ = enumerate_dataset(ds, config.depth, config.tree_threshold, cache_dir, config.tree_inclusive)
    return [prepare(g, config, r) for g, r in zip(ds, recs)]


def _csv(header: Sequence[str], rows) -> str:
    import csv
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _emit(out_dir: str, summary: dict) -> None:
    _atomic_write(os.path.join(out_dir, "summary.json"), json.dumps(summary, indent=1, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))


# --------------------------------------------------------------------------
# commands


def cmd_enumerate(args) -> int:
    r = resolve(args, {"dataset": None, "out": "runs/enumerate", "seed": 0, "depth": 3, "tree_threshold": 3,
                       "cache_dir": None, "degree_features": False})
    if not r["dataset"]:
        raise ConfigError("--dataset is required")
    write_resolved(r["out"], r)
    ds, _ = load_dataset(r["dataset"], r["seed"], r["degree_features"])
    recs, timing = enumerate_dataset(ds, r["depth"], r["tree_threshold"], r["cache_dir"])
    lines = [json.dumps({"graph": i, **rec.to_json()}) + "\n" for i, graph in enumerate(recs) for rec in graph]
    _atomic_write(os.path.join(r["out"], "records.jsonl"), "".join(lines))
    census = subgraph_census(rec for graph in recs for rec in graph)
    _atomic_write(os.path.join(r["out"], "census.csv"), census_csv(census))
    cols = ["graph", "n", "m", "records", "operations", "seconds"]
    _atomic_write(os.path.join(r["out"], "timing.csv"), _csv(cols, [[t[c] for c in cols] for t in timing]))
    totals = {}
    for (kind, _), c in census.items():
        totals[kind] = totals.get(kind, 0) + c
    _emit(r["out"], {"command": "enumerate", "graphs": len(ds), "records": sum(totals.values()), "by_kind": totals})
    return EXIT_OK


def cmd_spng(args) -> int:
    r = resolve(args, {"out": "runs/spng", "seed": 0, "pairs": 100, "nodes": 16, "degree": 3,
                       "substrate": "regular", "edge_prob": 0.25, "feature_alphabet": 1,
                       "label_rule": "swap_order", "certify_wl": True, "certify_iso": True})
    write_resolved(r["out"], r)
    ds, pairs = generate_spng(r["pairs"], r["nodes"], r["edge_prob"], r["feature_alphabet"], r["seed"],
                              require_wl_equiv=r["certify_wl"], require_noniso=r["certify_iso"],
                              substrate=r["substrate"], degree=r["degree"], label_rule=r["label_rule"])
    target = os.path.join(r["out"], "SPNG")
    write_tu_dataset(ds, target, "SPNG")
    params = {k: r[k] for k in ("seed", "pairs", "nodes", "degree", "substrate", "edge_prob", "feature_alphabet",
                                "label_rule")}
    _atomic_write(os.path.join(target, "SPNG_pairs.json"), pairs_sidecar(pairs, params))
    _emit(r["out"], {"command": "spng", "pairs": len(pairs), "graphs": len(ds),
                     "wl_certified": sum(p.wl_certificate for p in pairs),
                     "iso_certified": sum(bool(p.iso_certificate) for p in pairs)})
    return EXIT_OK


TRAIN_DEFAULTS = {"dataset": None, "out": "runs/train", "variant": "tlgnn", "folds": 1, "cache_dir": None,
                  "degree_features": False, **MODEL_DEFAULTS}


def _pair_rows(pairs, embed):
    rows = []
    for k, p in enumerate(pairs):
        score = pair_separation_score(embed, p)
        rows.append([k, repr(score), int(score == 0.0), int(p.certified)])
    return rows


def cmd_train(args) -> int:
    r = resolve(args, dict(TRAIN_DEFAULTS))
    if not r["dataset"]:
        raise ConfigError("--dataset is required")
    config = model_config(r)
    write_resolved(r["out"], r)
    ds, pairs = load_dataset(r["dataset"], config.seed, r["degree_features"])
    inputs = _inputs(ds, config, r["cache_dir"])
    summary = {"command": "train", "variant": r["variant"], "graphs": len(ds)}
    if r["folds"] and r["folds"] > 1:
        cv: CvResult = cross_validate(ds, config, r["folds"], inputs)
        curve = cv.curve
        summary.update(cv_mean_accuracy=cv.mean, cv_std=cv.std, fold_accuracies=cv.fold_accuracies)
    else:
        params, curve = train(inputs, config, feature_width=ds.feature_width, class_count=ds.class_count)
        _, acc, logits = evaluate(params, config, inputs)
        summary["final_train_accuracy"] = acc
        _atomic_write(os.path.join(r["out"], "checkpoint.json"),
                      save_checkpoint(params, config, {"dataset": r["dataset"], "dataset_hash": dataset_hash(ds)}))
        _atomic_write(os.path.join(r["out"], "attention.csv"), attention_csv(params))
        if pairs:
            by_graph = {id(g): logits[i] for i, g in enumerate(ds)}
            rows = _pair_rows(pairs, lambda g: by_graph[id(g)])
            _atomic_write(os.path.join(r["out"], "pair_ties.csv"),
                          _csv(["pair", "separation", "tied", "certified"], rows))
            summary["pairs"] = len(rows)
            summary["tied_pairs"] = sum(row[2] for row in rows)
    _atomic_write(os.path.join(r["out"], "metrics.csv"), metrics_csv(curve))
    _emit(r["out"], summary)
    return EXIT_OK


def cmd_eval(args) -> int:
    r = resolve(args, {"dataset": None, "out": "runs/eval", "checkpoint": None, "seed": 0, "cache_dir": None,
                       "degree_features": False})
    if not r["dataset"] or not r["checkpoint"]:
        raise ConfigError("--dataset and --checkpoint are required")
    write_resolved(r["out"], r)
    with open(r["checkpoint"]) as fh:
        params, config = load_checkpoint(fh.read())
    ds, pairs = load_dataset(r["dataset"], r["seed"], r["degree_features"])
    if ds.feature_width != params.feature_width:
        raise ConfigError(f"dataset feature width {ds.feature_width} != checkpoint {params.feature_width}")
    inputs = _inputs(ds, config, r["cache_dir"])
    loss, acc, logits = evaluate(params, config, inputs)
    rows = [[i, int(np.argmax(l)), g.graph_label] for i, (g, l) in enumerate(zip(ds, logits))]
    _atomic_write(os.path.join(r["out"], "predictions.csv"), _csv(["graph", "predicted", "label"], rows))
    _emit(r["out"], {"command": "eval", "loss": loss, "accuracy": acc, "graphs": len(ds)})
    return EXIT_OK


def cmd_depth_sweep(args) -> int:
    r = resolve(args, {**TRAIN_DEFAULTS, "out": "runs/depth_sweep", "folds": 10, "depths": "1,2,3,4,5"})
    if not r["dataset"]:
        raise ConfigError("--dataset is required")
    try:
        depths = [int(x) for x in str(r["depths"]).split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --depths: {e}") from e
    if not depths:
        raise ConfigError("empty depth range")
    model_config(r)
    write_resolved(r["out"], r)
    ds, _ = load_dataset(r["dataset"], r["seed"], r["degree_features"])
    rows, counts = [], []
    for d in depths:
        config = model_config({**r, "depth": d})
        inputs = _inputs(ds, config, r["cache_dir"])
        counts.append([d, sum(len(i.records) for i in inputs)])
        cv = cross_validate(ds, config, r["folds"], inputs)
        rows.append([d, repr(cv.mean), repr(cv.std), f"{cv.train_seconds:.3f}", f"{cv.test_seconds:.3f}"])
    _atomic_write(os.path.join(r["out"], "depth_sweep.csv"),
                  _csv(["D", "mean_acc", "std", "train_time", "test_time"], rows))
    _atomic_write(os.path.join(r["out"], "depth_counts.csv"), _csv(["D", "records"], counts))
    _emit(r["out"], {"command": "depth-sweep", "depths": depths,
                     "mean_acc": {str(row[0]): float(row[1]) for row in rows}})
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tlgnn", description="Two-level GNN experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out")
    common.add_argument("--seed", type=int)
    common.add_argument("--config", help="flat key=value file; flags override it")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--dataset", help="TU dataset directory, or SPNG to synthesise the default set")
    data.add_argument("--cache-dir", dest="cache_dir")
    data.add_argument("--degree-features", dest="degree_features", action="store_const", const=True)

    enum_opts = argparse.ArgumentParser(add_help=False)
    enum_opts.add_argument("--depth", type=int)
    enum_opts.add_argument("--tree-threshold", dest="tree_threshold", type=int)

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--variant", choices=sorted(VARIANTS))
    model.add_argument("--layers", type=int)
    model.add_argument("--hidden", type=int)
    model.add_argument("--epochs", type=int)
    model.add_argument("--lr", type=float)
    model.add_argument("--batch-size", dest="batch_size", type=int)
    model.add_argument("--folds", type=int)
    model.add_argument("--readout", choices=["jumping", "last"])
    model.add_argument("--readout-pool", dest="readout_pool", choices=["pre_merge", "merged"])
    model.add_argument("--supernode-encoding", dest="supernode_encoding", choices=list(SUPERNODE_ENCODINGS))

    s = sub.add_parser("enumerate", parents=[common, data, enum_opts], help="subgraph records and census")
    s.set_defaults(func=cmd_enumerate)

    s = sub.add_parser("spng", parents=[common], help="synthesise PNG pairs in TU format")
    s.add_argument("--pairs", type=int)
    s.add_argument("--nodes", type=int)
    s.add_argument("--degree", type=int)
    s.add_argument("--substrate", choices=["regular", "er"])
    s.add_argument("--edge-prob", dest="edge_prob", type=float)
    s.add_argument("--feature-alphabet", dest="feature_alphabet", type=int)
    s.add_argument("--label-rule", dest="label_rule", choices=["swap_order", "triangle"])
    s.add_argument("--certify-wl", dest="certify_wl", action=argparse.BooleanOptionalAction, default=None)
    s.add_argument("--certify-iso", dest="certify_iso", action=argparse.BooleanOptionalAction, default=None)
    s.set_defaults(func=cmd_spng)

    s = sub.add_parser("train", parents=[common, data, enum_opts, model], help="train (or cross-validate)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common, data], help="score a dataset with a checkpoint")
    s.add_argument("--checkpoint")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("depth-sweep", parents=[common, data, enum_opts, model], help="CV accuracy per depth")
    s.add_argument("--depths", help="comma-separated depths, e.g. 1,2,3,4,5")
    s.set_defaults(func=cmd_depth_sweep)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IngestionError, FileNotFoundError) as e:
        print(f"ingestion error: {e}", file=sys.stderr)
        return EXIT_INGESTION
    except GenerationBudgetError as e:
        print(f"generation budget exhausted: {e}; rejected={e.rejected}", file=sys.stderr)
        return EXIT_GENERATION
    except DivergenceError as e:
        print(f"divergence: {e}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (ConfigError, OracleBudgetError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
