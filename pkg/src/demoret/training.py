"""Contrastive training of the retriever model.

Each anchor from the label set is embedded together with its positives and
negatives; the loss treats every positive in turn as the numerator against
the anchor's own candidate pool (positives + negatives, nothing borrowed from
other anchors), summed over positives and averaged over the batch anchors.
Optimization runs on a float64 master copy of the parameters; checkpoints are
float32 snapshots and the last checkpoint is the model a run ships.
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericError, ShapeError, ValidationError
from .hsc import ContainerHeader, ExampleRecord, problem_matrix
from .labels import AnchorLabels, LabelSet, check_labels_resolve
from .model import (
    RetrieverModel,
    assign_flat_params,
    check_container_compat,
    embed_backward,
    embed_batch_with_cache,
    flatten_grads,
    flatten_params,
    save_checkpoint,
)
from .nn.backend import kernels
from .nn.core import AdamWState, adamw_step
from .seeding import rng_for

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 0.07
    batch_size: int = 64
    total_steps: int = 10000
    checkpoint_every: int = 1000
    normalize_embeddings: bool = True
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if self.temperature <= 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be >= 1, got {self.total_steps}")
        if self.checkpoint_every < 1:
            raise ConfigError(f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"betas must lie in [0, 1), got ({self.beta1}, {self.beta2})")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")


@dataclass
class TrainReport:
    losses: list[float]
    checkpoints: list[tuple[int, str]]
    final_checkpoint: str
    wall_clock_s: float
    final_step: int


def contrastive_loss(anchor_emb: np.ndarray, pos_embs: np.ndarray,
                     neg_embs: np.ndarray | None, tau: float = 0.07,
                     normalize: bool = True
                     ) -> tuple[float, np.ndarray, np.ndarray, np.ndarray]:
    """Multi-positive contrastive loss for one anchor, with gradients.

    Returns (loss, d_anchor, d_pos, d_neg); gradients are of the summed
    per-positive terms. With identical similarities everywhere the loss is
    n_pos * ln(pool size).
    """
    if tau <= 0:
        raise ConfigError(f"tau must be positive, got {tau}")
    a = np.ascontiguousarray(anchor_emb, dtype=np.float64)
    p = np.ascontiguousarray(pos_embs, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"anchor must be a vector, got shape {a.shape}")
    if p.ndim != 2 or p.shape[1] != a.shape[0]:
        raise ShapeError(f"positives shape {p.shape} does not match anchor dim {a.shape[0]}")
    if p.shape[0] == 0:
        raise ValidationError("at least one positive is required")
    if neg_embs is None:
        n = np.zeros((0, a.shape[0]), dtype=np.float64)
    else:
        n = np.ascontiguousarray(neg_embs, dtype=np.float64)
        if n.size == 0:
            n = n.reshape(0, a.shape[0])
        if n.ndim != 2 or n.shape[1] != a.shape[0]:
            raise ShapeError(f"negatives shape {n.shape} does not match anchor dim {a.shape[0]}")
    for name, arr in (("anchor", a), ("positives", p), ("negatives", n)):
        if not np.isfinite(arr).all():
            raise ValidationError(f"non-finite values in {name}")
    loss, da, dp, dn = kernels.contrastive_loss_grad(a, p, n, float(tau), bool(normalize))
    return float(loss), da, dp, dn


def _batch_rows(batch: list[AnchorLabels], id_to_row: dict[str, int]
                ) -> tuple[np.ndarray, list[tuple[int, np.ndarray, np.ndarray]]]:
    """Map a batch of anchors to unique corpus rows plus local index triples.

    Returns (unique corpus row indices in first-appearance order, and per
    anchor (local anchor idx, local positive idxs, local negative idxs)).
    """
    local: dict[int, int] = {}
    order: list[int] = []

    def lookup(rec_id: str) -> int:
        row = id_to_row[rec_id]
        li = local.get(row)
        if li is None:
            li = len(order)
            local[row] = li
            order.append(row)
        return li

    triples = []
    for a in batch:
        ai = lookup(a.id)
        pos = np.array([lookup(i) for i, _ in a.positives], dtype=np.intp)
        neg = np.array([lookup(i) for i, _ in a.negatives], dtype=np.intp)
        triples.append((ai, pos, neg))
    return np.array(order, dtype=np.intp), triples


def train_step(model: RetrieverModel, states: np.ndarray, batch: list[AnchorLabels],
               id_to_row: dict[str, int], flat: np.ndarray, opt: AdamWState,
               config: TrainConfig, step: int) -> tuple[float, np.ndarray]:
    """One optimizer step over a batch of anchors; returns (mean loss, new flat)."""
    rows, triples = _batch_rows(batch, id_to_row)
    emb, cache = embed_batch_with_cache(model, states[rows])

    d_emb = np.zeros_like(emb)
    scale = 1.0 / len(batch)
    total = 0.0
    for (ai, pos, neg), anchor in zip(triples, batch):
        loss, da, dp, dn = kernels.contrastive_loss_grad(
            emb[ai], emb[pos], emb[neg],
            float(config.temperature), bool(config.normalize_embeddings),
        )
        if not np.isfinite(loss):
            raise NumericError(f"non-finite loss at step {step} for anchor {anchor.id!r}")
        total += loss
        d_emb[ai] += scale * da
        if pos.size:
            d_emb[pos] += scale * dp
        if neg.size:
            d_emb[neg] += scale * dn

    grads = embed_backward(model, cache, d_emb)
    flat_g = flatten_grads(grads)
    if not np.isfinite(flat_g).all():
        raise NumericError(f"non-finite gradient at step {step}")
    new_flat = adamw_step(opt, flat, flat_g)
    assign_flat_params(model, new_flat)
    return total * scale, new_flat


def _batches(anchors: list[AnchorLabels], batch_size: int, total_steps: int, seed: int):
    """Yield total_steps batches, reshuffling the anchor order each epoch."""
    n = len(anchors)
    produced = 0
    epoch = 0
    while produced < total_steps:
        order = rng_for(seed, "shuffle", epoch).permutation(n)
        for start in range(0, n, batch_size):
            if produced == total_steps:
                return
            idx = order[start:start + batch_size]
            yield [anchors[i] for i in idx]
            produced += 1
        epoch += 1


def train_loop(header: ContainerHeader, records: list[ExampleRecord],
               label_set: LabelSet, model: RetrieverModel, config: TrainConfig,
               out_dir: str) -> TrainReport:
    """Run the full training schedule, writing checkpoints and a step log.

    The model argument is updated in place (in float64); the artifact of
    record is the final checkpoint file, a float32 snapshot.
    """
    config.validate()
    check_container_compat(model, header)
    check_labels_resolve(label_set, records)
    for a in label_set.anchors:
        if not a.positives:
            raise ValidationError(f"anchor {a.id!r} has no positives")

    os.makedirs(out_dir, exist_ok=True)
    states = problem_matrix(records, model.pooling)
    id_to_row = {rec.id: i for i, rec in enumerate(records)}

    batch_size = config.batch_size
    if batch_size > len(label_set.anchors):
        logger.warning(
            "batch_size %d exceeds corpus of %d anchors; clamping",
            batch_size, len(label_set.anchors),
        )
        batch_size = len(label_set.anchors)

    # float64 master parameters for the whole run
    for li, p in enumerate(model.layers):
        model.layers[li] = p.astype(np.float64)
    model.layer_logits = model.layer_logits.astype(np.float64)
    flat = flatten_params(model)
    opt = AdamWState.for_size(
        flat.size, lr=config.lr, weight_decay=config.weight_decay,
        beta1=config.beta1, beta2=config.beta2, epsilon=config.epsilon,
    )

    losses: list[float] = []
    checkpoints: list[tuple[int, str]] = []
    t0 = time.perf_counter()
    log_path = os.path.join(out_dir, "train_log.txt")
    with open(log_path, "w", encoding="utf-8") as log:
        step = 0
        for batch in _batches(label_set.anchors, batch_size, config.total_steps, config.seed):
            step += 1
            loss, flat = train_step(
                model, states, batch, id_to_row, flat, opt, config, step
            )
            losses.append(loss)
            elapsed = time.perf_counter() - t0
            log.write(f"step={step} loss={loss:.8f} elapsed_s={elapsed:.3f}\n")
            if step % 100 == 0 or step == config.total_steps:
                logger.info("step=%d loss=%.6f elapsed_s=%.1f", step, loss, elapsed)
            if step % config.checkpoint_every == 0:
                path = os.path.join(out_dir, f"ckpt_step{step:07d}.dtrm")
                save_checkpoint(model, step, path)
                checkpoints.append((step, path))

    final_path = os.path.join(out_dir, "ckpt_final.dtrm")
    save_checkpoint(model, config.total_steps, final_path)
    checkpoints.append((config.total_steps, final_path))
    return TrainReport(
        losses=losses,
        checkpoints=checkpoints,
        final_checkpoint=final_path,
        wall_clock_s=time.perf_counter() - t0,
        final_step=config.total_steps,
    )
