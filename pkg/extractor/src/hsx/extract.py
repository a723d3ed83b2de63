"""The extraction pipeline: dataset rows to a written container."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import PooledRecord, write_dtrv
from .dataset import read_dataset
from .errors import ExtractionError
from .model import ModelRunner
from .pooling import POOLING_MODES, pool
from .prompts import TARGET_MODES, problem_prompt, target_prompt


@dataclass(frozen=True)
class ExtractionJob:
    model: str
    dataset: str
    out: str
    layer_ids: tuple[int, ...] | None = None
    layer_stride: int = 5
    pooling_modes: tuple[str, ...] = ("mean", "eos")
    targets: str = "query"
    batch_size: int = 8
    device: str = "cpu"
    max_tokens: int | None = None


@dataclass(frozen=True)
class SkipEntry:
    id: str
    reason: str


@dataclass
class ExtractionReport:
    out: str
    n_written: int
    dim: int
    layer_ids: tuple[int, ...]
    skipped: list[SkipEntry] = field(default_factory=list)


def _validate_job(job: ExtractionJob) -> None:
    if job.targets not in TARGET_MODES:
        raise ExtractionError(f"targets must be one of {TARGET_MODES}, got {job.targets!r}")
    modes = tuple(job.pooling_modes)
    if not modes or tuple(m for m in POOLING_MODES if m in modes) != modes:
        raise ExtractionError(
            f"pooling modes must be a non-empty subset of {POOLING_MODES} "
            f"in that order, got {modes}"
        )
    if job.batch_size < 1:
        raise ExtractionError(f"batch size must be >= 1, got {job.batch_size}")
    if job.layer_ids is None and job.layer_stride < 1:
        raise ExtractionError(f"layer stride must be >= 1, got {job.layer_stride}")
    if job.max_tokens is not None and job.max_tokens < 1:
        raise ExtractionError(f"max tokens must be >= 1, got {job.max_tokens}")


def resolve_layer_ids(job: ExtractionJob, n_layers: int) -> tuple[int, ...]:
    """Kept layers: explicit ids, or every stride-th index from 0.

    Index 0 is the embedding layer; the valid range runs through n_layers,
    the final block's output.
    """
    if job.layer_ids is not None:
        ids = tuple(int(i) for i in job.layer_ids)
        if not ids:
            raise ExtractionError("explicit layer id list is empty")
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ExtractionError(f"layer ids must be strictly increasing, got {ids}")
        bad = [i for i in ids if i < 0 or i > n_layers]
        if bad:
            raise ExtractionError(
                f"layer ids {bad} do not exist; model has hidden states 0..{n_layers}"
            )
        return ids
    return tuple(range(0, n_layers + 1, job.layer_stride))


def extract(job: ExtractionJob) -> ExtractionReport:
    """Run the model over the dataset and write the pooled container."""
    _validate_job(job)
    rows = read_dataset(job.dataset)
    runner = ModelRunner.load(job.model, device=job.device)
    layer_ids = resolve_layer_ids(job, runner.n_layers)
    modes = tuple(job.pooling_modes)
    cap = runner.max_positions
    if job.max_tokens is not None:
        cap = min(cap, job.max_tokens)

    # plan each row's sequences up front so overflow and missing-query rows
    # are skipped before any inference runs
    skipped: list[SkipEntry] = []
    plan: list[tuple[object, str, str | None]] = []
    for row in rows:
        prob = problem_prompt(row)
        targ = target_prompt(row, job.targets)
        if not prob:
            skipped.append(SkipEntry(row.id, "empty problem prompt"))
            continue
        if job.targets != "none" and row.query is None:
            skipped.append(SkipEntry(row.id, f"missing query for targets={job.targets}"))
            continue
        if job.targets != "none" and not targ:
            skipped.append(SkipEntry(row.id, "empty target prompt"))
            continue
        n = runner.token_count(prob)
        if n > cap:
            skipped.append(SkipEntry(row.id, f"problem prompt is {n} tokens, cap {cap}"))
            continue
        if targ is not None:
            n = runner.token_count(targ)
            if n > cap:
                skipped.append(SkipEntry(row.id, f"target prompt is {n} tokens, cap {cap}"))
                continue
        plan.append((row, prob, targ))
    if not plan:
        raise ExtractionError(
            f"all {len(rows)} rows were skipped; first reason: "
            f"{skipped[0].id}: {skipped[0].reason}"
        )

    sequences: list[str] = []
    for _, prob, targ in plan:
        sequences.append(prob)
        if targ is not None:
            sequences.append(targ)

    pooled: list[dict[str, np.ndarray]] = []
    for start in range(0, len(sequences), job.batch_size):
        batch = sequences[start:start + job.batch_size]
        for states in runner.layer_states(batch, layer_ids):
            pooled.append({m: np.stack([pool(layer, m) for layer in states]) for m in modes})

    records: list[PooledRecord] = []
    cursor = 0
    for row, _, targ in plan:
        problem = pooled[cursor]
        cursor += 1
        target = None
        if targ is not None:
            target = pooled[cursor]
            cursor += 1
        records.append(PooledRecord(
            id=row.id, schema_id=row.schema_id, split=row.split,
            problem=problem, target=target,
        ))

    write_dtrv(job.out, records, layer_ids, modes)
    return ExtractionReport(
        out=job.out,
        n_written=len(records),
        dim=runner.hidden_size,
        layer_ids=layer_ids,
        skipped=skipped,
    )
