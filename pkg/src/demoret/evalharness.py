"""Evaluation: synthetic corpora, per-layer sweeps, retriever metrics, sweeps.

Metrics reported:
  mean_top1_proxy     mean proxy score of the top retrieved demonstration
  recall_at_k         how often the proxy-oracle argmax appears in the top k
  cluster_recall_at_1 how often the top hit shares the query's planted cluster

The proxy oracle ranks candidates by the same target-state similarity the
labeler uses, restricted to the same filtered candidate set the retriever
saw, so the comparison is apples to apples.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError
from .hsc import ContainerHeader, ExampleRecord, problem_matrix, target_matrix
from .index import RetrievalFilter, build_index, id_sort_ranks, retrieve, topk_by_score
from .labels import LabelSet, ProxyConfig, build_label_set, compute_proxy_scores, resolve_target_layer
from .model import ModelConfig, RetrieverModel, embed_batch, init_model, load_checkpoint
from .seeding import rng_for
from .training import TrainConfig, train_loop

FILTER_MODES = ("none", "ood", "id")

_NORM_EPS = 1e-12


# ---------------------------------------------------------------------------
# Synthetic corpus with planted cluster structure

@dataclass(frozen=True)
class SyntheticSpec:
    """Planted-signal corpus: one informative layer, the rest pure noise.

    Problem states at the informative layer are a unit cluster center plus
    Gaussian noise with norm ~ 1/snr; every other layer is Gaussian noise
    with norm ~ sqrt(dim), loud enough to bury the signal unless the layer
    carrying it is found. Target states are informative at every layer.
    """

    n_clusters: int = 5
    per_cluster: int = 40
    dev_per_cluster: int = 40
    dim: int = 32
    n_layers: int = 5
    informative_layer: int = 2
    snr: float = 10.0
    n_schemas: int = 4
    seed: int = 0

    def validate(self) -> None:
        if self.n_clusters < 2:
            raise ConfigError(f"n_clusters must be >= 2, got {self.n_clusters}")
        if self.per_cluster < 1 or self.dev_per_cluster < 0:
            raise ConfigError("per_cluster must be >= 1 and dev_per_cluster >= 0")
        if self.dim < 2 or self.n_layers < 1:
            raise ConfigError(f"dim {self.dim} and n_layers {self.n_layers} too small")
        if not (0 <= self.informative_layer < self.n_layers):
            raise ConfigError(
                f"informative_layer {self.informative_layer} not in [0, {self.n_layers})"
            )
        if self.snr <= 0:
            raise ConfigError(f"snr must be positive, got {self.snr}")
        if self.n_schemas < 1:
            raise ConfigError(f"n_schemas must be >= 1, got {self.n_schemas}")

    @property
    def layer_ids(self) -> tuple[int, ...]:
        return tuple(range(self.n_layers))


def generate_synthetic(spec: SyntheticSpec
                       ) -> tuple[list[ExampleRecord], list[ExampleRecord], dict[str, int]]:
    """Build (train records, dev records, id -> cluster map)."""
    spec.validate()
    rng = rng_for(spec.seed, "synth")
    d = spec.dim
    centers = rng.standard_normal((spec.n_clusters, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    noise_scale = 1.0 / (spec.snr * np.sqrt(d))

    def informative(c: int) -> np.ndarray:
        return centers[c] + rng.standard_normal(d) * noise_scale

    def make_record(c: int, j: int, split: str, prefix: str) -> ExampleRecord:
        problem = {}
        target = {}
        for mode in ("mean", "eos"):
            rows = np.empty((spec.n_layers, d), dtype=np.float64)
            for li in range(spec.n_layers):
                if li == spec.informative_layer:
                    rows[li] = informative(c)
                else:
                    rows[li] = rng.standard_normal(d)
            problem[mode] = rows.astype(np.float32)
            trows = np.stack([informative(c) for _ in range(spec.n_layers)])
            target[mode] = trows.astype(np.float32)
        return ExampleRecord(
            id=f"{prefix}-c{c}-{j:03d}",
            schema_id=f"schema{j % spec.n_schemas}",
            split=split,
            problem_states=problem,
            target_states=target,
        )

    train: list[ExampleRecord] = []
    dev: list[ExampleRecord] = []
    cluster_map: dict[str, int] = {}
    for c in range(spec.n_clusters):
        for j in range(spec.per_cluster):
            rec = make_record(c, j, "train", "train")
            train.append(rec)
            cluster_map[rec.id] = c
    for c in range(spec.n_clusters):
        for j in range(spec.dev_per_cluster):
            rec = make_record(c, j, "dev", "dev")
            dev.append(rec)
            cluster_map[rec.id] = c
    return train, dev, cluster_map


# ---------------------------------------------------------------------------
# Metrics

@dataclass
class EvalMetrics:
    n_queries: int
    k: int
    filter_mode: str
    similarity: str
    mean_top1_proxy: float | None = None
    recall_at_k: float | None = None
    cluster_recall_at_1: float | None = None

    def to_row(self) -> dict:
        row = {
            "n_queries": self.n_queries, "k": self.k,
            "filter_mode": self.filter_mode, "similarity": self.similarity,
        }
        for name in ("mean_top1_proxy", "recall_at_k", "cluster_recall_at_1"):
            val = getattr(self, name)
            if val is not None:
                row[name] = val
        return row


def _filter_for(mode: str, query: ExampleRecord) -> RetrievalFilter:
    if mode == "none":
        return RetrievalFilter.none()
    if mode == "ood":
        return RetrievalFilter.ood(query.schema_id)
    if mode == "id":
        return RetrievalFilter.in_domain(query.schema_id, query.id)
    raise ConfigError(f"filter_mode must be one of {FILTER_MODES}, got {mode!r}")


def _admitted_mask(filt: RetrievalFilter, ids: list[str], schemas: list[str]) -> np.ndarray:
    return np.fromiter(
        (filt.admits(i, s) for i, s in zip(ids, schemas)), dtype=bool, count=len(ids)
    )


def evaluate_retriever(model: RetrieverModel, header_train: ContainerHeader,
                       train_records: list[ExampleRecord], header_dev: ContainerHeader,
                       dev_records: list[ExampleRecord], proxy_config: ProxyConfig,
                       k: int = 1, filter_mode: str = "ood", similarity: str = "cosine",
                       cluster_map: dict[str, int] | None = None) -> EvalMetrics:
    """Retrieve for every dev query and compare against the proxy oracle."""
    if filter_mode not in FILTER_MODES:
        raise ConfigError(f"filter_mode must be one of {FILTER_MODES}, got {filter_mode!r}")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if not header_train.has_targets or not header_dev.has_targets:
        raise ValidationError("both corpora need target states for the proxy oracle")
    if header_train.layer_ids != header_dev.layer_ids or header_train.dim != header_dev.dim:
        raise ValidationError("train and dev containers disagree on geometry")

    index = build_index(model, header_train, train_records, similarity=similarity)

    layer_id = resolve_target_layer(proxy_config, header_train.layer_ids)
    layer_row = header_train.layer_ids.index(layer_id)
    train_targets = target_matrix(train_records, proxy_config.target_pooling, layer_row)
    dev_targets = target_matrix(dev_records, proxy_config.target_pooling, layer_row)
    train_ids = [r.id for r in train_records]
    train_schemas = [r.schema_id for r in train_records]
    ranks = id_sort_ranks(train_ids)
    id_to_row = {rid: i for i, rid in enumerate(train_ids)}

    dev_emb = embed_batch(model, problem_matrix(dev_records, model.pooling))

    top1_proxy_sum = 0.0
    oracle_hits = 0
    cluster_hits = 0
    have_clusters = cluster_map is not None
    for qi, rec in enumerate(dev_records):
        filt = _filter_for(filter_mode, rec)
        result = retrieve(index, dev_emb[qi], k, filt, query_id=rec.id)
        top_ids = [i for i, _ in result.hits]

        proxy = compute_proxy_scores(dev_targets[qi], train_targets, proxy_config.similarity)
        top1_proxy_sum += float(proxy[id_to_row[top_ids[0]]])

        admitted = np.nonzero(_admitted_mask(filt, train_ids, train_schemas))[0]
        oracle_top = topk_by_score(proxy, ranks, admitted, 1)[0]
        if train_ids[oracle_top] in top_ids:
            oracle_hits += 1

        if have_clusters:
            if rec.id not in cluster_map or top_ids[0] not in cluster_map:
                have_clusters = False
            elif cluster_map[top_ids[0]] == cluster_map[rec.id]:
                cluster_hits += 1

    n = len(dev_records)
    return EvalMetrics(
        n_queries=n, k=k, filter_mode=filter_mode, similarity=similarity,
        mean_top1_proxy=top1_proxy_sum / n,
        recall_at_k=oracle_hits / n,
        cluster_recall_at_1=(cluster_hits / n) if have_clusters else None,
    )


def layer_sweep(header: ContainerHeader, train_records: list[ExampleRecord],
                dev_records: list[ExampleRecord], pooling: str,
                similarity: str = "cosine", k: int = 1,
                proxy_config: ProxyConfig | None = None,
                cluster_map: dict[str, int] | None = None,
                filter_mode: str = "none") -> list[dict]:
    """Retrieve with each layer's raw pooled states; one metric row per layer.

    No model is involved: this measures how much retrieval signal each kept
    layer carries on its own, which is the baseline for choosing layers.
    """
    if filter_mode not in FILTER_MODES:
        raise ConfigError(f"filter_mode must be one of {FILTER_MODES}, got {filter_mode!r}")
    cand = problem_matrix(train_records, pooling)
    quer = problem_matrix(dev_records, pooling)
    train_ids = [r.id for r in train_records]
    train_schemas = [r.schema_id for r in train_records]
    ranks = id_sort_ranks(train_ids)

    use_proxy = proxy_config is not None and header.has_targets \
        and all(r.target_states is not None for r in dev_records)
    if use_proxy:
        layer_id = resolve_target_layer(proxy_config, header.layer_ids)
        layer_row = header.layer_ids.index(layer_id)
        train_targets = target_matrix(train_records, proxy_config.target_pooling, layer_row)
        dev_targets = target_matrix(dev_records, proxy_config.target_pooling, layer_row)

    def normalized(m: np.ndarray) -> np.ndarray:
        norms = np.linalg.norm(m, axis=1)
        safe = np.where(norms <= _NORM_EPS, 1.0, norms)
        return np.where((norms <= _NORM_EPS)[:, None], 0.0, m / safe[:, None])

    rows: list[dict] = []
    for li, layer_id_l in enumerate(header.layer_ids):
        c = cand[:, li, :]
        q = quer[:, li, :]
        if similarity == "cosine":
            c = normalized(c)
            q = normalized(q)
        scores = q @ c.T

        top1_proxy_sum = 0.0
        oracle_hits = 0
        cluster_hits = 0
        clusters_ok = cluster_map is not None
        for qi, rec in enumerate(dev_records):
            filt = _filter_for(filter_mode, rec)
            admitted = np.nonzero(_admitted_mask(filt, train_ids, train_schemas))[0]
            if admitted.size == 0:
                raise ValidationError(f"filter admits no candidates for query {rec.id!r}")
            top = topk_by_score(scores[qi], ranks, admitted, k)
            top_ids = [train_ids[t] for t in top]

            if use_proxy:
                proxy = compute_proxy_scores(
                    dev_targets[qi], train_targets, proxy_config.similarity
                )
                top1_proxy_sum += float(proxy[top[0]])
                oracle_top = topk_by_score(proxy, ranks, admitted, 1)[0]
                if train_ids[oracle_top] in top_ids:
                    oracle_hits += 1
            if clusters_ok:
                if rec.id not in cluster_map or top_ids[0] not in cluster_map:
                    clusters_ok = False
                elif cluster_map[top_ids[0]] == cluster_map[rec.id]:
                    cluster_hits += 1

        n = len(dev_records)
        row: dict = {"layer_id": int(layer_id_l)}
        if use_proxy:
            row["mean_top1_proxy"] = top1_proxy_sum / n
            row["recall_at_k"] = oracle_hits / n
        if clusters_ok:
            row["cluster_recall_at_1"] = cluster_hits / n
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Hyperparameter sweep

SWEEPABLE = ("n_pos", "batch_size", "target_mode")


def sweep_driver(param: str, values: list, header_train: ContainerHeader,
                 train_records: list[ExampleRecord], header_dev: ContainerHeader,
                 dev_records: list[ExampleRecord], proxy_config: ProxyConfig,
                 train_config: TrainConfig, model_config: ModelConfig, out_dir: str,
                 k: int = 1, filter_mode: str = "ood", similarity: str = "cosine",
                 cluster_map: dict[str, int] | None = None) -> list[dict]:
    """Label, train and evaluate once per value of one swept parameter."""
    if param not in SWEEPABLE:
        raise ConfigError(f"param must be one of {SWEEPABLE}, got {param!r}")
    if not values:
        raise ConfigError("sweep needs at least one value")
    os.makedirs(out_dir, exist_ok=True)

    rows: list[dict] = []
    for value in values:
        pc, tc = proxy_config, train_config
        if param == "n_pos":
            pc = dataclasses.replace(pc, n_pos=int(value))
        elif param == "target_mode":
            pc = dataclasses.replace(pc, target_mode=str(value))
        else:
            tc = dataclasses.replace(tc, batch_size=int(value))

        run_dir = os.path.join(out_dir, f"{param}_{value}")
        t0 = time.perf_counter()
        labels = build_label_set(header_train, train_records, pc)
        model = init_model(model_config)
        report = train_loop(header_train, train_records, labels, model, tc, run_dir)
        final_model, _ = load_checkpoint(report.final_checkpoint)
        metrics = evaluate_retriever(
            final_model, header_train, train_records, header_dev, dev_records,
            pc, k=k, filter_mode=filter_mode, similarity=similarity,
            cluster_map=cluster_map,
        )
        row = {"param": param, "value": value}
        row.update(metrics.to_row())
        row["final_loss"] = report.losses[-1]
        row["train_wall_s"] = round(time.perf_counter() - t0, 3)
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Tables

def _fmt(val) -> str:
    if isinstance(val, float):
        return f"{val:.6f}"
    return str(val)


def format_table(rows: list[dict]) -> str:
    """Aligned plain-text table; column order follows first appearance."""
    if not rows:
        return "(no rows)\n"
    cols: list[str] = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    cells = [[_fmt(row.get(c, "")) for c in cols] for row in rows]
    widths = [max(len(c), *(len(line[i]) for line in cells)) for i, c in enumerate(cols)]
    out = io.StringIO()
    out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip() + "\n")
    out.write("  ".join("-" * w for w in widths) + "\n")
    for line in cells:
        out.write("  ".join(v.ljust(w) for v, w in zip(line, widths)).rstrip() + "\n")
    return out.getvalue()


def write_metrics_dsv(rows: list[dict], path: str, delimiter: str = ",") -> None:
    """Delimiter-separated metric rows; floats at full precision."""
    if not rows:
        raise ValidationError("no rows to write")
    cols: list[str] = []
    for row in rows:
        for key in row:
            if key not in cols:
                cols.append(key)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        writer.writerow(cols)
        for row in rows:
            line = []
            for c in cols:
                v = row.get(c, "")
                if v is None:
                    v = ""
                elif isinstance(v, float):
                    v = repr(v)
                line.append(v)
            writer.writerow(line)
