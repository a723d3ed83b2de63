"""Hidden-state container: binary storage for per-example pooled LLM states.

One file holds a corpus of examples. Every example carries, for each kept
transformer layer, a pooled hidden-state vector of the problem text, and
optionally the same for problem+answer text (the supervision targets used by
the proxy labeler). All tensors are float32, little-endian, row-major; string
fields are length-prefixed UTF-8. The header pins the geometry, so a file can
be validated structurally without reading every record.

Layout (all integers little-endian):

    magic      4 bytes  b"DTRV"
    version    u32      1
    n_records  u32
    l_kept     u16      number of kept layers
    dim        u32      hidden size per layer
    layer_ids  u16 * l_kept, strictly increasing
    pool_mask  u8       bit 0 = "mean" present, bit 1 = "eos" present
    has_targets u8      0 or 1

    then n_records records:
      id         u32 length + UTF-8 bytes
      schema_id  u32 length + UTF-8 bytes
      split      u8   0=train 1=dev 2=test
      problem tensor per present pooling mode, canonical order (mean, eos),
          each l_kept*dim float32
      target tensors likewise, only when has_targets
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptionError,
    FormatError,
    IncompatibleError,
    UnsupportedFormatError,
    ValidationError,
)

MAGIC = b"DTRV"
VERSION = 1

POOLING_MODES = ("mean", "eos")
SPLITS = ("train", "dev", "test")

_SPLIT_TO_CODE = {name: i for i, name in enumerate(SPLITS)}
_HEADER_FMT = "<4sIIHI"
_POOL_BITS = {"mean": 1, "eos": 2}


@dataclass
class ExampleRecord:
    """One example: pooled problem states and optional target states.

    problem_states maps pooling mode -> float32 array of shape [l_kept, dim];
    target_states is None or a dict with the same keys and shapes.
    """

    id: str
    schema_id: str
    split: str
    problem_states: dict[str, np.ndarray]
    target_states: dict[str, np.ndarray] | None = None

    def modes(self) -> tuple[str, ...]:
        return tuple(m for m in POOLING_MODES if m in self.problem_states)


@dataclass(frozen=True)
class ContainerHeader:
    n_records: int
    l_kept: int
    dim: int
    layer_ids: tuple[int, ...]
    pooling_modes: tuple[str, ...]
    has_targets: bool
    version: int = VERSION


def _check_tensor(arr: object, l_kept: int, dim: int, what: str) -> np.ndarray:
    a = np.asarray(arr)
    if a.ndim != 2 or a.shape != (l_kept, dim):
        raise FormatError(
            f"{what}: expected shape ({l_kept}, {dim}), got {a.shape}"
        )
    a = np.ascontiguousarray(a, dtype=np.float32)
    if not np.isfinite(a).all():
        raise ValidationError(f"{what}: non-finite values")
    return a


def derive_header(records: list[ExampleRecord], layer_ids: tuple[int, ...]) -> ContainerHeader:
    """Validate a record list against a layer-id list and build its header."""
    if not records:
        raise ValidationError("container must hold at least one record")
    layer_ids = tuple(int(i) for i in layer_ids)
    if not layer_ids:
        raise ValidationError("layer id list is empty")
    if any(i < 0 or i > 0xFFFF for i in layer_ids):
        raise ValidationError(f"layer ids out of range: {layer_ids}")
    if any(b <= a for a, b in zip(layer_ids, layer_ids[1:])):
        raise ValidationError(f"layer ids must be strictly increasing: {layer_ids}")

    first = records[0]
    modes = first.modes()
    if not modes:
        raise ValidationError(f"record {first.id!r} has no pooling modes")
    has_targets = first.target_states is not None
    l_kept = len(layer_ids)
    dims = {first.problem_states[m].shape[1] for m in modes}
    if len(dims) != 1:
        raise FormatError(f"record {first.id!r}: inconsistent dims {dims}")
    dim = dims.pop()

    seen: set[str] = set()
    for rec in records:
        if rec.id in seen:
            raise ValidationError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if rec.split not in _SPLIT_TO_CODE:
            raise ValidationError(f"record {rec.id!r}: bad split {rec.split!r}")
        if rec.modes() != modes or set(rec.problem_states) != set(modes):
            raise FormatError(
                f"record {rec.id!r}: pooling modes {sorted(rec.problem_states)}"
                f" do not match container modes {sorted(modes)}"
            )
        if (rec.target_states is not None) != has_targets:
            raise FormatError(
                f"record {rec.id!r}: target presence differs from container"
            )
        for m in modes:
            _check_tensor(rec.problem_states[m], l_kept, dim, f"record {rec.id!r} problem[{m}]")
            if has_targets:
                if set(rec.target_states) != set(modes):
                    raise FormatError(
                        f"record {rec.id!r}: target modes do not match problem modes"
                    )
                _check_tensor(rec.target_states[m], l_kept, dim, f"record {rec.id!r} target[{m}]")

    return ContainerHeader(
        n_records=len(records),
        l_kept=l_kept,
        dim=dim,
        layer_ids=layer_ids,
        pooling_modes=modes,
        has_targets=has_targets,
    )


def _write_str(out: io.BufferedIOBase, s: str) -> None:
    b = s.encode("utf-8")
    out.write(struct.pack("<I", len(b)))
    out.write(b)


def write_container(path: str, records: list[ExampleRecord], layer_ids: tuple[int, ...]) -> ContainerHeader:
    """Validate records and write them to path. Returns the header written."""
    header = derive_header(records, layer_ids)
    buf = io.BytesIO()
    buf.write(struct.pack(
        _HEADER_FMT, MAGIC, VERSION, header.n_records, header.l_kept, header.dim
    ))
    buf.write(struct.pack(f"<{header.l_kept}H", *header.layer_ids))
    pool_mask = 0
    for m in header.pooling_modes:
        pool_mask |= _POOL_BITS[m]
    buf.write(struct.pack("<BB", pool_mask, int(header.has_targets)))

    for rec in records:
        _write_str(buf, rec.id)
        _write_str(buf, rec.schema_id)
        buf.write(struct.pack("<B", _SPLIT_TO_CODE[rec.split]))
        for m in header.pooling_modes:
            a = np.ascontiguousarray(rec.problem_states[m], dtype="<f4")
            buf.write(a.tobytes())
        if header.has_targets:
            for m in header.pooling_modes:
                a = np.ascontiguousarray(rec.target_states[m], dtype="<f4")
                buf.write(a.tobytes())

    with open(path, "wb") as f:
        f.write(buf.getvalue())
    return header


class _Reader:
    """Cursor over the file bytes with short-read detection."""

    def __init__(self, data: bytes, path: str):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptionError(f"{self.path}: truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))

    def take_str(self, what: str) -> str:
        (n,) = self.unpack("<I", f"{what} length")
        try:
            return self.take(n, what).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptionError(f"{self.path}: {what} is not valid UTF-8") from e


def read_container(path: str) -> tuple[ContainerHeader, list[ExampleRecord]]:
    """Read and validate a container file."""
    with open(path, "rb") as f:
        data = f.read()
    r = _Reader(data, path)

    magic, version, n_records, l_kept, dim = r.unpack(_HEADER_FMT, "header")
    if magic != MAGIC:
        raise UnsupportedFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {version}")
    if n_records == 0:
        raise CorruptionError(f"{path}: container declares zero records")
    if l_kept == 0 or dim == 0:
        raise CorruptionError(f"{path}: zero layer count or dim")
    layer_ids = r.unpack(f"<{l_kept}H", "layer ids")
    if any(b <= a for a, b in zip(layer_ids, layer_ids[1:])):
        raise CorruptionError(f"{path}: layer ids not strictly increasing")
    pool_mask, has_targets_b = r.unpack("<BB", "pooling flags")
    modes = tuple(m for m in POOLING_MODES if pool_mask & _POOL_BITS[m])
    if not modes or pool_mask & ~sum(_POOL_BITS.values()):
        raise CorruptionError(f"{path}: invalid pooling mask {pool_mask:#x}")
    if has_targets_b not in (0, 1):
        raise CorruptionError(f"{path}: invalid target flag {has_targets_b}")
    has_targets = bool(has_targets_b)

    tensor_bytes = l_kept * dim * 4
    records: list[ExampleRecord] = []
    seen: set[str] = set()
    for i in range(n_records):
        rec_id = r.take_str(f"record {i} id")
        schema_id = r.take_str(f"record {i} schema id")
        (split_code,) = r.unpack("<B", f"record {i} split")
        if split_code >= len(SPLITS):
            raise CorruptionError(f"{path}: record {rec_id!r} has bad split code {split_code}")
        if rec_id in seen:
            raise ValidationError(f"{path}: duplicate record id {rec_id!r}")
        seen.add(rec_id)

        def read_block(what: str) -> np.ndarray:
            raw = r.take(tensor_bytes, what)
            a = np.frombuffer(raw, dtype="<f4").reshape(l_kept, dim).copy()
            if not np.isfinite(a).all():
                raise ValidationError(f"{path}: {what} holds non-finite values")
            return a

        problem = {m: read_block(f"record {rec_id!r} problem[{m}]") for m in modes}
        target = None
        if has_targets:
            target = {m: read_block(f"record {rec_id!r} target[{m}]") for m in modes}
        records.append(ExampleRecord(
            id=rec_id, schema_id=schema_id, split=SPLITS[split_code],
            problem_states=problem, target_states=target,
        ))

    if r.pos != len(data):
        raise CorruptionError(f"{path}: {len(data) - r.pos} trailing bytes after last record")

    header = ContainerHeader(
        n_records=n_records, l_kept=l_kept, dim=dim, layer_ids=tuple(layer_ids),
        pooling_modes=modes, has_targets=has_targets,
    )
    return header, records


def merge_containers(paths: list[str], out_path: str) -> ContainerHeader:
    """Concatenate containers with identical geometry into one file."""
    if not paths:
        raise ValidationError("no containers to merge")
    headers: list[ContainerHeader] = []
    all_records: list[ExampleRecord] = []
    for p in paths:
        h, recs = read_container(p)
        headers.append(h)
        all_records.extend(recs)
    ref = headers[0]
    for p, h in zip(paths[1:], headers[1:]):
        same = (
            h.l_kept == ref.l_kept and h.dim == ref.dim
            and h.layer_ids == ref.layer_ids
            and h.pooling_modes == ref.pooling_modes
            and h.has_targets == ref.has_targets
        )
        if not same:
            raise IncompatibleError(
                f"{p}: geometry differs from {paths[0]} "
                f"(layers {h.layer_ids} vs {ref.layer_ids}, dim {h.dim} vs {ref.dim}, "
                f"modes {h.pooling_modes} vs {ref.pooling_modes}, "
                f"targets {h.has_targets} vs {ref.has_targets})"
            )
    ids = [rec.id for rec in all_records]
    dupes = {i for i in ids if ids.count(i) > 1} if len(set(ids)) != len(ids) else set()
    if dupes:
        raise ValidationError(f"duplicate ids across containers: {sorted(dupes)[:5]}")
    return write_container(out_path, all_records, ref.layer_ids)


def problem_matrix(records: list[ExampleRecord], mode: str) -> np.ndarray:
    """Stack problem states as float64 [n, l_kept, dim] for compute."""
    if not records:
        raise ValidationError("no records to stack")
    for rec in records:
        if mode not in rec.problem_states:
            raise ValidationError(f"record {rec.id!r} lacks pooling mode {mode!r}")
    return np.stack([rec.problem_states[mode] for rec in records]).astype(np.float64)


def target_matrix(records: list[ExampleRecord], mode: str, layer_row: int) -> np.ndarray:
    """Stack one layer row of target states as float64 [n, dim]."""
    out = np.empty((len(records), records[0].target_states[mode].shape[1]), dtype=np.float64)
    for i, rec in enumerate(records):
        if rec.target_states is None or mode not in rec.target_states:
            raise ValidationError(f"record {rec.id!r} lacks target states for mode {mode!r}")
        out[i] = rec.target_states[mode][layer_row]
    return out
