"""Command-line front end.

Subcommands cover the full pipeline: validate containers, generate synthetic
corpora, compute proxy labels, train, build indexes, retrieve, evaluate and
sweep. Every artifact-producing subcommand takes --out-dir (default from
DEMORET_OUT_DIR) plus an optional --config JSON file whose keys match the
long flag names; explicitly passed flags win over the file, and the merged
result is echoed to <out-dir>/effective_config.json.

Exit codes: 0 success, 1 operational failure (bad data, bad files, numeric
trouble), 2 usage errors. Operational failures print exactly one line:
"error: <ErrorClass>: <message>".
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .errors import ConfigError, DataError, DemoretError
from .evalharness import (
    FILTER_MODES,
    SWEEPABLE,
    SyntheticSpec,
    evaluate_retriever,
    format_table,
    generate_synthetic,
    layer_sweep,
    sweep_driver,
    write_metrics_dsv,
)
from .hsc import POOLING_MODES, read_container, write_container
from .index import (
    SIMILARITIES,
    RetrievalFilter,
    build_index,
    check_index_model_compat,
    load_index,
    retrieve,
    save_index,
)
from .labels import (
    NEGATIVE_SAMPLING,
    TARGET_MODES,
    ProxyConfig,
    build_label_set,
    read_label_set,
    write_label_set,
)
from .model import ModelConfig, embed_record, init_model, load_checkpoint
from .nn.core import ACTIVATIONS
from .training import TrainConfig, train_loop

OUT_DIR_ENV = "DEMORET_OUT_DIR"


# ---------------------------------------------------------------------------
# Config merging

def _merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                  defaults: dict) -> dict:
    """defaults <- config file <- explicitly passed flags."""
    merged = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as f:
            try:
                file_cfg = json.load(f)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{config_path}: not valid JSON: {e}") from e
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{config_path}: top level must be a JSON object")
        unknown = set(file_cfg) - set(defaults)
        if unknown:
            raise ConfigError(
                f"{config_path}: unknown config keys {sorted(unknown)}; "
                f"known keys: {sorted(defaults)}"
            )
        merged.update(file_cfg)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            merged[key] = val
    return merged


def _resolve_out_dir(cfg: dict, parser: argparse.ArgumentParser) -> str:
    out = cfg.get("out_dir") or os.environ.get(OUT_DIR_ENV)
    if not out:
        parser.error(f"--out-dir is required (or set {OUT_DIR_ENV})")
    cfg["out_dir"] = out
    return out


def _echo_config(cfg: dict, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "effective_config.json"), "w", encoding="utf-8") as f:
        json.dump(cfg, f, indent=2, sort_keys=True)
        f.write("\n")


def _print_rows(rows: list[dict]) -> None:
    sys.stdout.write(format_table(rows))


# ---------------------------------------------------------------------------
# Subcommand handlers

def _cmd_validate(args, parser) -> int:
    for path in args.containers:
        header, records = read_container(path)
        schemas = sorted({r.schema_id for r in records})
        splits: dict[str, int] = {}
        for r in records:
            splits[r.split] = splits.get(r.split, 0) + 1
        split_txt = " ".join(f"{k}={v}" for k, v in sorted(splits.items()))
        print(
            f"{path}: ok records={header.n_records} layers={list(header.layer_ids)} "
            f"dim={header.dim} modes={list(header.pooling_modes)} "
            f"targets={'yes' if header.has_targets else 'no'} "
            f"schemas={len(schemas)} splits[{split_txt}]"
        )
    return 0


_SYNTH_DEFAULTS = {
    "out_dir": None, "seed": 0, "n_clusters": 5, "per_cluster": 40,
    "dev_per_cluster": 40, "dim": 32, "n_layers": 5, "informative_layer": 2,
    "snr": 10.0, "n_schemas": 4,
}


def _cmd_synth(args, parser) -> int:
    cfg = _merge_config(args, parser, _SYNTH_DEFAULTS)
    out_dir = _resolve_out_dir(cfg, parser)
    spec = SyntheticSpec(
        n_clusters=int(cfg["n_clusters"]), per_cluster=int(cfg["per_cluster"]),
        dev_per_cluster=int(cfg["dev_per_cluster"]), dim=int(cfg["dim"]),
        n_layers=int(cfg["n_layers"]),
        informative_layer=int(cfg["informative_layer"]),
        snr=float(cfg["snr"]), n_schemas=int(cfg["n_schemas"]),
        seed=int(cfg["seed"]),
    )
    train, dev, cluster_map = generate_synthetic(spec)
    _echo_config(cfg, out_dir)
    train_path = os.path.join(out_dir, "train.dtrv")
    write_container(train_path, train, spec.layer_ids)
    wrote = f"wrote {train_path} ({len(train)} records)"
    if dev:
        dev_path = os.path.join(out_dir, "dev.dtrv")
        write_container(dev_path, dev, spec.layer_ids)
        wrote += f", {dev_path} ({len(dev)} records)"
    with open(os.path.join(out_dir, "clusters.json"), "w", encoding="utf-8") as f:
        json.dump(cluster_map, f, indent=2, sort_keys=True)
        f.write("\n")
    print(wrote)
    return 0


_LABEL_DEFAULTS = {
    "out_dir": None, "seed": 0, "container": None,
    "target_mode": "problem_plus_query", "target_pooling": "eos",
    "target_layer": None, "similarity": "dot", "n_pos": 40, "n_neg": 100,
    "negative_sampling": "uniform", "allow_corpus_limited": False,
}


def _proxy_config_from(cfg: dict) -> ProxyConfig:
    return ProxyConfig(
        target_mode=cfg["target_mode"], target_pooling=cfg["target_pooling"],
        target_layer=cfg["target_layer"], similarity=cfg["similarity"],
        n_pos=int(cfg["n_pos"]), n_neg=int(cfg["n_neg"]),
        negative_sampling=cfg["negative_sampling"], seed=int(cfg["seed"]),
        allow_corpus_limited=bool(cfg["allow_corpus_limited"]),
    )


def _cmd_label(args, parser) -> int:
    cfg = _merge_config(args, parser, _LABEL_DEFAULTS)
    if not cfg["container"]:
        parser.error("--container is required")
    out_dir = _resolve_out_dir(cfg, parser)
    header, records = read_container(cfg["container"])
    label_set = build_label_set(header, records, _proxy_config_from(cfg))
    _echo_config(cfg, out_dir)
    out_path = os.path.join(out_dir, "labels.json")
    write_label_set(label_set, out_path)
    print(
        f"wrote {out_path}: {len(label_set.anchors)} anchors, "
        f"n_pos={label_set.config.n_pos} n_neg={label_set.config.n_neg}"
        + (" (corpus-limited)" if label_set.corpus_limited else "")
    )
    return 0


_TRAIN_DEFAULTS = {
    "out_dir": None, "seed": 0, "container": None, "labels": None,
    "temperature": 0.07, "batch_size": 64, "total_steps": 10000,
    "checkpoint_every": 1000, "normalize_embeddings": True,
    "lr": 1e-4, "weight_decay": 0.01, "beta1": 0.9, "beta2": 0.98,
    "epsilon": 1e-8, "hidden": 1024, "embed": 512, "pooling": "eos",
    "activation": "relu",
}


def _cmd_train(args, parser) -> int:
    cfg = _merge_config(args, parser, _TRAIN_DEFAULTS)
    if not cfg["container"] or not cfg["labels"]:
        parser.error("--container and --labels are required")
    out_dir = _resolve_out_dir(cfg, parser)
    header, records = read_container(cfg["container"])
    label_set = read_label_set(cfg["labels"])
    seed = int(cfg["seed"])
    model_config = ModelConfig(
        dim=header.dim, layer_ids=header.layer_ids, hidden=int(cfg["hidden"]),
        embed=int(cfg["embed"]), pooling=cfg["pooling"],
        activation=cfg["activation"], seed=seed,
    )
    train_config = TrainConfig(
        temperature=float(cfg["temperature"]), batch_size=int(cfg["batch_size"]),
        total_steps=int(cfg["total_steps"]),
        checkpoint_every=int(cfg["checkpoint_every"]),
        normalize_embeddings=bool(cfg["normalize_embeddings"]),
        lr=float(cfg["lr"]), weight_decay=float(cfg["weight_decay"]),
        beta1=float(cfg["beta1"]), beta2=float(cfg["beta2"]),
        epsilon=float(cfg["epsilon"]), seed=seed,
    )
    _echo_config(cfg, out_dir)
    model = init_model(model_config)
    report = train_loop(header, records, label_set, model, train_config, out_dir)
    print(
        f"trained {report.final_step} steps in {report.wall_clock_s:.1f}s; "
        f"final loss {report.losses[-1]:.6f}; checkpoint {report.final_checkpoint}"
    )
    return 0


_INDEX_DEFAULTS = {
    "out_dir": None, "container": None, "checkpoint": None, "similarity": "cosine",
}


def _cmd_index(args, parser) -> int:
    cfg = _merge_config(args, parser, _INDEX_DEFAULTS)
    if not cfg["container"] or not cfg["checkpoint"]:
        parser.error("--container and --checkpoint are required")
    out_dir = _resolve_out_dir(cfg, parser)
    header, records = read_container(cfg["container"])
    model, _ = load_checkpoint(cfg["checkpoint"])
    index = build_index(model, header, records, similarity=cfg["similarity"])
    _echo_config(cfg, out_dir)
    out_path = os.path.join(out_dir, "index.dtri")
    save_index(index, out_path)
    print(f"wrote {out_path}: {len(index)} candidates, similarity={index.similarity}")
    return 0


def _cmd_retrieve(args, parser) -> int:
    index = load_index(args.index)
    model, _ = load_checkpoint(args.checkpoint)
    check_index_model_compat(index, model)
    header, records = read_container(args.container)
    by_id = {r.id: r for r in records}
    if args.query_id not in by_id:
        raise DataError(f"query id {args.query_id!r} not found in {args.container}")
    query = by_id[args.query_id]
    if args.filter == "ood":
        filt = RetrievalFilter.ood(query.schema_id)
    elif args.filter == "id":
        filt = RetrievalFilter.in_domain(query.schema_id, query.id)
    else:
        filt = RetrievalFilter.none()
    emb = embed_record(model, query)
    result = retrieve(index, emb, args.k, filt, query_id=query.id)
    for rank, (rec_id, score) in enumerate(result.hits, start=1):
        print(f"{rank}\t{rec_id}\t{score:.6f}")
    return 0


_EVAL_DEFAULTS = {
    "out_dir": None, "seed": 0, "train_container": None, "dev_container": None,
    "checkpoint": None, "k": 1, "filter": "ood", "similarity": "cosine",
    "clusters": None,
    "target_mode": "problem_plus_query", "target_pooling": "eos",
    "target_layer": None, "proxy_similarity": "dot",
}


def _load_cluster_map(path: str | None) -> dict[str, int] | None:
    if not path:
        return None
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON: {e}") from e
    if not isinstance(obj, dict) or not all(
        isinstance(k, str) and isinstance(v, int) for k, v in obj.items()
    ):
        raise ConfigError(f"{path}: expected an object mapping id -> cluster int")
    return obj


def _cmd_eval(args, parser) -> int:
    cfg = _merge_config(args, parser, _EVAL_DEFAULTS)
    for key in ("train_container", "dev_container", "checkpoint"):
        if not cfg[key]:
            parser.error(f"--{key.replace('_', '-')} is required")
    out_dir = _resolve_out_dir(cfg, parser)
    header_train, train_records = read_container(cfg["train_container"])
    header_dev, dev_records = read_container(cfg["dev_container"])
    model, _ = load_checkpoint(cfg["checkpoint"])
    proxy_config = ProxyConfig(
        target_mode=cfg["target_mode"], target_pooling=cfg["target_pooling"],
        target_layer=cfg["target_layer"], similarity=cfg["proxy_similarity"],
        seed=int(cfg["seed"]),
    )
    cluster_map = _load_cluster_map(cfg["clusters"])
    metrics = evaluate_retriever(
        model, header_train, train_records, header_dev, dev_records, proxy_config,
        k=int(cfg["k"]), filter_mode=cfg["filter"], similarity=cfg["similarity"],
        cluster_map=cluster_map,
    )
    _echo_config(cfg, out_dir)
    rows = [metrics.to_row()]
    write_metrics_dsv(rows, os.path.join(out_dir, "metrics.csv"))
    with open(os.path.join(out_dir, "metrics.txt"), "w", encoding="utf-8") as f:
        f.write(format_table(rows))
    _print_rows(rows)
    return 0


_SWEEP_DEFAULTS = {
    "out_dir": None, "seed": 0, "train_container": None, "dev_container": None,
    "param": None, "values": None, "k": 1, "filter": "ood", "similarity": "cosine",
    "clusters": None,
    "target_mode": "problem_plus_query", "target_pooling": "eos",
    "target_layer": None, "proxy_similarity": "dot", "n_pos": 40, "n_neg": 100,
    "negative_sampling": "uniform", "allow_corpus_limited": False,
    "temperature": 0.07, "batch_size": 64, "total_steps": 10000,
    "checkpoint_every": 1000, "normalize_embeddings": True,
    "lr": 1e-4, "weight_decay": 0.01, "beta1": 0.9, "beta2": 0.98,
    "epsilon": 1e-8, "hidden": 1024, "embed": 512, "pooling": "eos",
    "activation": "relu",
}


def _cmd_sweep(args, parser) -> int:
    cfg = _merge_config(args, parser, _SWEEP_DEFAULTS)
    for key in ("train_container", "dev_container", "param", "values"):
        if not cfg[key]:
            parser.error(f"--{key.replace('_', '-')} is required")
    out_dir = _resolve_out_dir(cfg, parser)
    param = cfg["param"]
    if param not in SWEEPABLE:
        raise ConfigError(f"param must be one of {SWEEPABLE}, got {param!r}")
    raw_values = cfg["values"]
    if isinstance(raw_values, str):
        raw_values = [v.strip() for v in raw_values.split(",") if v.strip()]
    if not isinstance(raw_values, list) or not raw_values:
        raise ConfigError("values must be a non-empty comma-separated list")
    values = [str(v) for v in raw_values] if param == "target_mode" \
        else [int(v) for v in raw_values]

    header_train, train_records = read_container(cfg["train_container"])
    header_dev, dev_records = read_container(cfg["dev_container"])
    seed = int(cfg["seed"])
    proxy_config = ProxyConfig(
        target_mode=cfg["target_mode"], target_pooling=cfg["target_pooling"],
        target_layer=cfg["target_layer"], similarity=cfg["proxy_similarity"],
        n_pos=int(cfg["n_pos"]), n_neg=int(cfg["n_neg"]),
        negative_sampling=cfg["negative_sampling"], seed=seed,
        allow_corpus_limited=bool(cfg["allow_corpus_limited"]),
    )
    train_config = TrainConfig(
        temperature=float(cfg["temperature"]), batch_size=int(cfg["batch_size"]),
        total_steps=int(cfg["total_steps"]),
        checkpoint_every=int(cfg["checkpoint_every"]),
        normalize_embeddings=bool(cfg["normalize_embeddings"]),
        lr=float(cfg["lr"]), weight_decay=float(cfg["weight_decay"]),
        beta1=float(cfg["beta1"]), beta2=float(cfg["beta2"]),
        epsilon=float(cfg["epsilon"]), seed=seed,
    )
    model_config = ModelConfig(
        dim=header_train.dim, layer_ids=header_train.layer_ids,
        hidden=int(cfg["hidden"]), embed=int(cfg["embed"]),
        pooling=cfg["pooling"], activation=cfg["activation"], seed=seed,
    )
    cluster_map = _load_cluster_map(cfg["clusters"])
    _echo_config({**cfg, "values": list(values)}, out_dir)
    rows = sweep_driver(
        param, values, header_train, train_records, header_dev, dev_records,
        proxy_config, train_config, model_config, out_dir,
        k=int(cfg["k"]), filter_mode=cfg["filter"], similarity=cfg["similarity"],
        cluster_map=cluster_map,
    )
    write_metrics_dsv(rows, os.path.join(out_dir, "sweep.csv"))
    with open(os.path.join(out_dir, "sweep.txt"), "w", encoding="utf-8") as f:
        f.write(format_table(rows))
    _print_rows(rows)
    return 0


def _cmd_layers(args, parser) -> int:
    header_train, train_records = read_container(args.train_container)
    header_dev, dev_records = read_container(args.dev_container)
    if header_train.layer_ids != header_dev.layer_ids or header_train.dim != header_dev.dim:
        raise ConfigError("train and dev containers disagree on geometry")
    proxy_config = None
    if header_train.has_targets and header_dev.has_targets:
        proxy_config = ProxyConfig(
            target_pooling=args.target_pooling, similarity=args.proxy_similarity,
            target_layer=args.target_layer,
        )
    cluster_map = _load_cluster_map(args.clusters)
    rows = layer_sweep(
        header_train, train_records, dev_records, args.pooling,
        similarity=args.similarity, k=args.k, proxy_config=proxy_config,
        cluster_map=cluster_map, filter_mode=args.filter,
    )
    _print_rows(rows)
    return 0


# ---------------------------------------------------------------------------
# Parser construction

def _add_common(p: argparse.ArgumentParser, *, seed: bool = True) -> None:
    p.add_argument("--config", help="JSON config file; flags override its keys")
    p.add_argument("--out-dir", dest="out_dir",
                   help=f"output directory (default: ${OUT_DIR_ENV})")
    if seed:
        p.add_argument("--seed", type=int, help="root seed for this run")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demoret",
        description="Demonstration retrieval over pooled LLM hidden states.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("validate", help="check container files and print a summary")
    p.add_argument("containers", nargs="+", metavar="CONTAINER")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic planted-cluster corpus")
    _add_common(p)
    p.add_argument("--n-clusters", dest="n_clusters", type=int)
    p.add_argument("--per-cluster", dest="per_cluster", type=int)
    p.add_argument("--dev-per-cluster", dest="dev_per_cluster", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--n-layers", dest="n_layers", type=int)
    p.add_argument("--informative-layer", dest="informative_layer", type=int)
    p.add_argument("--snr", type=float)
    p.add_argument("--n-schemas", dest="n_schemas", type=int)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("label", help="compute proxy labels for a corpus")
    _add_common(p)
    p.add_argument("--container")
    p.add_argument("--target-mode", dest="target_mode", choices=TARGET_MODES)
    p.add_argument("--target-pooling", dest="target_pooling", choices=POOLING_MODES)
    p.add_argument("--target-layer", dest="target_layer", type=int)
    p.add_argument("--similarity", choices=SIMILARITIES)
    p.add_argument("--n-pos", dest="n_pos", type=int)
    p.add_argument("--n-neg", dest="n_neg", type=int)
    p.add_argument("--negative-sampling", dest="negative_sampling", choices=NEGATIVE_SAMPLING)
    p.add_argument("--allow-corpus-limited", dest="allow_corpus_limited",
                   action="store_const", const=True)
    p.set_defaults(func=_cmd_label)

    p = sub.add_parser("train", help="train the retriever on labeled examples")
    _add_common(p)
    p.add_argument("--container")
    p.add_argument("--labels")
    p.add_argument("--temperature", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--normalize", dest="normalize_embeddings",
                   action="store_const", const=True)
    p.add_argument("--no-normalize", dest="normalize_embeddings",
                   action="store_const", const=False)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--embed", type=int)
    p.add_argument("--pooling", choices=POOLING_MODES)
    p.add_argument("--activation", choices=sorted(ACTIVATIONS))
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("index", help="embed a corpus into a retrieval index")
    _add_common(p, seed=False)
    p.add_argument("--container")
    p.add_argument("--checkpoint")
    p.add_argument("--similarity", choices=SIMILARITIES)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("retrieve", help="query an index for one example")
    p.add_argument("--index", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--container", required=True, help="container holding the query record")
    p.add_argument("--query-id", dest="query_id", required=True)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--filter", choices=FILTER_MODES, default="ood")
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("eval", help="evaluate a checkpoint against the proxy oracle")
    _add_common(p)
    p.add_argument("--train-container", dest="train_container")
    p.add_argument("--dev-container", dest="dev_container")
    p.add_argument("--checkpoint")
    p.add_argument("--k", type=int)
    p.add_argument("--filter", choices=FILTER_MODES)
    p.add_argument("--similarity", choices=SIMILARITIES)
    p.add_argument("--clusters", help="clusters.json for cluster recall")
    p.add_argument("--target-mode", dest="target_mode", choices=TARGET_MODES)
    p.add_argument("--target-pooling", dest="target_pooling", choices=POOLING_MODES)
    p.add_argument("--target-layer", dest="target_layer", type=int)
    p.add_argument("--proxy-similarity", dest="proxy_similarity", choices=SIMILARITIES)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("layers", help="per-layer retrieval quality from raw states")
    p.add_argument("--train-container", dest="train_container", required=True)
    p.add_argument("--dev-container", dest="dev_container", required=True)
    p.add_argument("--pooling", choices=POOLING_MODES, default="eos")
    p.add_argument("--similarity", choices=SIMILARITIES, default="cosine")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--filter", choices=FILTER_MODES, default="none")
    p.add_argument("--clusters")
    p.add_argument("--target-pooling", dest="target_pooling",
                   choices=POOLING_MODES, default="eos")
    p.add_argument("--target-layer", dest="target_layer", type=int)
    p.add_argument("--proxy-similarity", dest="proxy_similarity",
                   choices=SIMILARITIES, default="dot")
    p.set_defaults(func=_cmd_layers)

    p = sub.add_parser("sweep", help="label/train/eval once per swept value")
    _add_common(p)
    p.add_argument("--train-container", dest="train_container")
    p.add_argument("--dev-container", dest="dev_container")
    p.add_argument("--param", choices=SWEEPABLE)
    p.add_argument("--values", help="comma-separated values for the swept parameter")
    p.add_argument("--k", type=int)
    p.add_argument("--filter", choices=FILTER_MODES)
    p.add_argument("--similarity", choices=SIMILARITIES)
    p.add_argument("--clusters")
    p.add_argument("--target-mode", dest="target_mode", choices=TARGET_MODES)
    p.add_argument("--target-pooling", dest="target_pooling", choices=POOLING_MODES)
    p.add_argument("--target-layer", dest="target_layer", type=int)
    p.add_argument("--proxy-similarity", dest="proxy_similarity", choices=SIMILARITIES)
    p.add_argument("--n-pos", dest="n_pos", type=int)
    p.add_argument("--n-neg", dest="n_neg", type=int)
    p.add_argument("--negative-sampling", dest="negative_sampling", choices=NEGATIVE_SAMPLING)
    p.add_argument("--allow-corpus-limited", dest="allow_corpus_limited",
                   action="store_const", const=True)
    p.add_argument("--temperature", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--total-steps", dest="total_steps", type=int)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    p.add_argument("--normalize", dest="normalize_embeddings",
                   action="store_const", const=True)
    p.add_argument("--no-normalize", dest="normalize_embeddings",
                   action="store_const", const=False)
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--hidden", type=int)
    p.add_argument("--embed", type=int)
    p.add_argument("--pooling", choices=POOLING_MODES)
    p.add_argument("--activation", choices=sorted(ACTIVATIONS))
    p.set_defaults(func=_cmd_sweep)

    return parser


def _one_line(e: BaseException) -> str:
    return " ".join(str(e).split())


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except DemoretError as e:
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error: {type(e).__name__}: {_one_line(e)}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
