"""Proxy labeler: turns target hidden states into training supervision.

For each anchor example, every other example in the corpus is scored by the
similarity of their target states (pooled problem+answer or answer-only text)
at one chosen layer. The top n_pos become positives; negatives are drawn from
the remainder either uniformly (seeded per anchor) or as the hardest ranks
just below the positives. Labels are computed once and stored as JSON; the
trainer never recomputes them.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ParseError, ValidationError
from .hsc import POOLING_MODES, ContainerHeader, ExampleRecord, target_matrix
from .seeding import rng_for

TARGET_MODES = ("query_only", "problem_plus_query")
SIMILARITIES = ("dot", "cosine")
NEGATIVE_SAMPLING = ("uniform", "hard")

_NORM_EPS = 1e-12


@dataclass(frozen=True)
class ProxyConfig:
    """How proxy scores and the positive/negative split are produced.

    target_layer is a kept-layer id; None selects the middle kept layer.
    allow_corpus_limited permits clamping n_pos/n_neg on corpora too small
    for the requested counts (the label set records that it happened).
    """

    target_mode: str = "problem_plus_query"
    target_pooling: str = "eos"
    target_layer: int | None = None
    similarity: str = "dot"
    n_pos: int = 40
    n_neg: int = 100
    negative_sampling: str = "uniform"
    seed: int = 0
    allow_corpus_limited: bool = False

    def validate(self) -> None:
        if self.target_mode not in TARGET_MODES:
            raise ConfigError(f"target_mode must be one of {TARGET_MODES}, got {self.target_mode!r}")
        if self.target_pooling not in POOLING_MODES:
            raise ConfigError(
                f"target_pooling must be one of {POOLING_MODES}, got {self.target_pooling!r}"
            )
        if self.similarity not in SIMILARITIES:
            raise ConfigError(f"similarity must be one of {SIMILARITIES}, got {self.similarity!r}")
        if self.negative_sampling not in NEGATIVE_SAMPLING:
            raise ConfigError(
                f"negative_sampling must be one of {NEGATIVE_SAMPLING}, "
                f"got {self.negative_sampling!r}"
            )
        if self.n_pos < 1:
            raise ConfigError(f"n_pos must be >= 1, got {self.n_pos}")
        if self.n_neg < 0:
            raise ConfigError(f"n_neg must be >= 0, got {self.n_neg}")


@dataclass
class AnchorLabels:
    """Supervision for one anchor: scored positives and negatives."""

    id: str
    positives: list[tuple[str, float]]
    negatives: list[tuple[str, float]]


@dataclass
class LabelSet:
    config: ProxyConfig
    seed: int
    anchors: list[AnchorLabels]
    corpus_limited: bool = False


def resolve_target_layer(config: ProxyConfig, layer_ids: tuple[int, ...]) -> int:
    """Return the kept-layer id the proxy score reads; default is the middle one."""
    if config.target_layer is None:
        return layer_ids[len(layer_ids) // 2]
    if config.target_layer not in layer_ids:
        raise ConfigError(
            f"target_layer {config.target_layer} is not a kept layer {layer_ids}"
        )
    return int(config.target_layer)


def _id_ranks(ids: list[str]) -> np.ndarray:
    """Rank of each id in ascending lexicographic order (tie-break key)."""
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    ranks = np.empty(len(ids), dtype=np.int64)
    for rank, idx in enumerate(order):
        ranks[idx] = rank
    return ranks


def compute_proxy_scores(anchor_vec: np.ndarray, cand_matrix: np.ndarray,
                         similarity: str) -> np.ndarray:
    """Similarity of one target vector against candidate target vectors.

    cosine treats near-zero-norm vectors as scoring 0 against everything.
    """
    a = np.asarray(anchor_vec, dtype=np.float64)
    c = np.asarray(cand_matrix, dtype=np.float64)
    if similarity == "cosine":
        an = float(np.linalg.norm(a))
        a = np.zeros_like(a) if an <= _NORM_EPS else a / an
        norms = np.linalg.norm(c, axis=1)
        safe = np.where(norms <= _NORM_EPS, 1.0, norms)
        c = np.where((norms <= _NORM_EPS)[:, None], 0.0, c / safe[:, None])
    elif similarity != "dot":
        raise ConfigError(f"similarity must be one of {SIMILARITIES}, got {similarity!r}")
    return c @ a


def build_label_set(header: ContainerHeader, records: list[ExampleRecord],
                    config: ProxyConfig) -> LabelSet:
    """Score every anchor against the rest of the corpus and split pos/neg.

    Deterministic in (records' contents, config): positives are the top
    n_pos scores with ties broken by ascending id; uniform negatives use a
    per-anchor seeded stream, so corpus order does not leak into the draw.
    """
    config.validate()
    if not header.has_targets:
        raise ValidationError("container has no target states; cannot compute proxy scores")
    if config.target_pooling not in header.pooling_modes:
        raise ValidationError(
            f"container lacks target pooling mode {config.target_pooling!r}"
        )
    n = len(records)
    if n < 2:
        raise ValidationError(f"need at least 2 records to label, got {n}")

    n_pos, n_neg = config.n_pos, config.n_neg
    corpus_limited = False
    if n_pos + n_neg > n - 1:
        if not config.allow_corpus_limited:
            raise ValidationError(
                f"corpus of {n} cannot supply n_pos={n_pos} + n_neg={n_neg} "
                f"per anchor; shrink the counts or set allow_corpus_limited"
            )
        n_pos = min(n_pos, n - 1)
        n_neg = min(n_neg, n - 1 - n_pos)
        corpus_limited = True

    layer_id = resolve_target_layer(config, header.layer_ids)
    layer_row = header.layer_ids.index(layer_id)
    resolved = dataclasses.replace(config, target_layer=layer_id)

    targets = target_matrix(records, config.target_pooling, layer_row)
    ids = [rec.id for rec in records]
    ranks = _id_ranks(ids)

    anchors: list[AnchorLabels] = []
    for ai, rec in enumerate(records):
        scores = compute_proxy_scores(targets[ai], targets, config.similarity)
        mask = np.ones(n, dtype=bool)
        mask[ai] = False
        cand_idx = np.nonzero(mask)[0]
        # sort candidates by descending score, ties by ascending id
        order = np.lexsort((ranks[cand_idx], -scores[cand_idx]))
        ranked = cand_idx[order]

        pos_idx = ranked[:n_pos]
        rest = ranked[n_pos:]
        if config.negative_sampling == "hard":
            neg_idx = rest[:n_neg]
        else:
            rng = rng_for(config.seed, "label", rec.id)
            pick = rng.choice(rest.size, size=min(n_neg, rest.size), replace=False)
            neg_idx = rest[pick]

        anchors.append(AnchorLabels(
            id=rec.id,
            positives=[(ids[j], float(scores[j])) for j in pos_idx],
            negatives=[(ids[j], float(scores[j])) for j in neg_idx],
        ))

    return LabelSet(config=resolved, seed=config.seed, anchors=anchors,
                    corpus_limited=corpus_limited)


# ---------------------------------------------------------------------------
# JSON serialization

def _labels_to_obj(ls: LabelSet) -> dict:
    return {
        "config": dataclasses.asdict(ls.config),
        "seed": ls.seed,
        "corpus_limited": ls.corpus_limited,
        "anchors": [
            {
                "id": a.id,
                "positives": [{"id": i, "score": s} for i, s in a.positives],
                "negatives": [{"id": i, "score": s} for i, s in a.negatives],
            }
            for a in ls.anchors
        ],
    }


def write_label_set(ls: LabelSet, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_labels_to_obj(ls), f, indent=2, sort_keys=True)
        f.write("\n")


def _require(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise ParseError(f"label file: missing {key!r} in {where}")
    val = obj[key]
    if kind is float:
        if not isinstance(val, (int, float)) or isinstance(val, bool):
            raise ParseError(f"label file: {where}.{key} must be a number")
        return float(val)
    if not isinstance(val, kind):
        raise ParseError(f"label file: {where}.{key} has wrong type")
    return val


def _parse_pairs(items, where: str) -> list[tuple[str, float]]:
    if not isinstance(items, list):
        raise ParseError(f"label file: {where} must be a list")
    out = []
    for i, it in enumerate(items):
        out.append((
            _require(it, "id", str, f"{where}[{i}]"),
            _require(it, "score", float, f"{where}[{i}]"),
        ))
    return out


def read_label_set(path: str) -> LabelSet:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f"{path}: not valid JSON: {e}") from e

    cfg_obj = _require(obj, "config", dict, "root")
    known = {f.name for f in dataclasses.fields(ProxyConfig)}
    unknown = set(cfg_obj) - known
    if unknown:
        raise ParseError(f"{path}: unknown config keys {sorted(unknown)}")
    missing = known - set(cfg_obj)
    if missing:
        raise ParseError(f"{path}: config missing keys {sorted(missing)}")
    try:
        config = ProxyConfig(**cfg_obj)
        config.validate()
    except (TypeError, ConfigError) as e:
        raise ParseError(f"{path}: bad config: {e}") from e

    anchors_obj = _require(obj, "anchors", list, "root")
    if not anchors_obj:
        raise ParseError(f"{path}: empty anchor list")
    anchors = [
        AnchorLabels(
            id=_require(a, "id", str, f"anchors[{i}]"),
            positives=_parse_pairs(_require(a, "positives", list, f"anchors[{i}]"),
                                   f"anchors[{i}].positives"),
            negatives=_parse_pairs(_require(a, "negatives", list, f"anchors[{i}]"),
                                   f"anchors[{i}].negatives"),
        )
        for i, a in enumerate(anchors_obj)
    ]
    for i, a in enumerate(anchors):
        if not a.positives:
            raise ParseError(f"{path}: anchors[{i}] has no positives")

    return LabelSet(
        config=config,
        seed=_require(obj, "seed", int, "root"),
        anchors=anchors,
        corpus_limited=bool(_require(obj, "corpus_limited", bool, "root")),
    )


def check_labels_resolve(ls: LabelSet, records: list[ExampleRecord]) -> None:
    """Every id a label set mentions must exist in the corpus."""
    known = {rec.id for rec in records}
    for a in ls.anchors:
        if a.id not in known:
            raise DataError(f"label anchor {a.id!r} not found in corpus")
        for i, _ in a.positives + a.negatives:
            if i not in known:
                raise DataError(f"label candidate {i!r} (anchor {a.id!r}) not found in corpus")
