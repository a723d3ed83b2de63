"""Writer for the DTRV hidden-state container, format version 1.

This is the output contract of the extractor: downstream retrieval tooling
reads these files, so the byte layout is fixed. Everything is little-endian;
strings are u32-length-prefixed UTF-8; tensors are row-major float32.

    magic       4 bytes  b"DTRV"
    version     u32      1
    n_records   u32
    l_kept      u16
    dim         u32
    layer_ids   u16 * l_kept, strictly increasing
    pool_mask   u8       bit 0 = "mean", bit 1 = "eos"
    has_targets u8       0 or 1
    records     id, schema_id (strings), split u8 (0=train 1=dev 2=test),
                then one [l_kept, dim] float32 tensor per pooling mode in
                (mean, eos) order for the problem text, then the same for
                the target text when has_targets is 1
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContainerError
from .pooling import POOLING_MODES

MAGIC = b"DTRV"
VERSION = 1

_SPLIT_CODES = {"train": 0, "dev": 1, "test": 2}
_POOL_BITS = {"mean": 1, "eos": 2}


@dataclass(frozen=True)
class PooledRecord:
    """One extracted example, ready to serialize.

    problem and target map pooling mode to a [l_kept, dim] float32 array;
    target is None when no target states were extracted.
    """

    id: str
    schema_id: str
    split: str
    problem: dict[str, np.ndarray]
    target: dict[str, np.ndarray] | None = None


def _checked(arr: np.ndarray, l_kept: int, dim: int, what: str) -> np.ndarray:
    a = np.ascontiguousarray(arr, dtype="<f4")
    if a.shape != (l_kept, dim):
        raise ContainerError(f"{what}: shape {a.shape} != ({l_kept}, {dim})")
    if not np.isfinite(a).all():
        raise ContainerError(f"{what}: non-finite values")
    return a


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def write_dtrv(
    path: str,
    records: list[PooledRecord],
    layer_ids: tuple[int, ...],
    modes: tuple[str, ...],
) -> None:
    """Validate and write records; modes must be in (mean, eos) order."""
    if not records:
        raise ContainerError("no records to write")
    if not modes or tuple(m for m in POOLING_MODES if m in modes) != tuple(modes):
        raise ContainerError(f"modes must be a subset of {POOLING_MODES} in order, got {modes}")
    if not layer_ids or any(b <= a for a, b in zip(layer_ids, layer_ids[1:])):
        raise ContainerError(f"layer ids must be non-empty and strictly increasing, got {layer_ids}")
    if any(i < 0 or i > 0xFFFF for i in layer_ids):
        raise ContainerError(f"layer ids out of u16 range: {layer_ids}")

    l_kept = len(layer_ids)
    dim = None
    for rec in records:
        for m in modes:
            if m not in rec.problem:
                raise ContainerError(f"record {rec.id!r}: missing problem mode {m!r}")
        if dim is None:
            dim = int(np.asarray(rec.problem[modes[0]]).shape[-1])
    has_targets = records[0].target is not None

    chunks: list[bytes] = [
        struct.pack("<4sIIHI", MAGIC, VERSION, len(records), l_kept, dim),
        struct.pack(f"<{l_kept}H", *layer_ids),
        struct.pack("<BB", sum(_POOL_BITS[m] for m in modes), int(has_targets)),
    ]
    seen: set[str] = set()
    for rec in records:
        if not rec.id:
            raise ContainerError("record with empty id")
        if rec.id in seen:
            raise ContainerError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if rec.split not in _SPLIT_CODES:
            raise ContainerError(f"record {rec.id!r}: bad split {rec.split!r}")
        if (rec.target is not None) != has_targets:
            raise ContainerError(f"record {rec.id!r}: target presence differs from first record")
        chunks.append(_pack_str(rec.id))
        chunks.append(_pack_str(rec.schema_id))
        chunks.append(struct.pack("<B", _SPLIT_CODES[rec.split]))
        for m in modes:
            chunks.append(_checked(rec.problem[m], l_kept, dim, f"{rec.id!r} problem[{m}]").tobytes())
        if has_targets:
            for m in modes:
                if m not in rec.target:
                    raise ContainerError(f"record {rec.id!r}: missing target mode {m!r}")
                chunks.append(_checked(rec.target[m], l_kept, dim, f"{rec.id!r} target[{m}]").tobytes())

    with open(path, "wb") as f:
        f.write(b"".join(chunks))
