"""Exact retrieval over learned embeddings, with schema-aware filtering.

The index is a dense float32 matrix of candidate embeddings plus their ids
and schema ids. Retrieval is an exhaustive scan: scores in float64, ranking
by descending score with ties broken by ascending id. Cosine indexes store
pre-normalized rows; queries are normalized at query time.

Index file layout ("DTRI", little-endian):

    magic      4 bytes  b"DTRI"
    version    u32      1
    n          u32      number of candidates
    embed      u32      embedding dim
    similarity u8       0=dot 1=cosine
    digest     32 bytes config digest of the model that built it
    ids        n * (u32 length + UTF-8)
    schema_ids n * (u32 length + UTF-8)
    matrix     n*embed float32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptionError,
    IncompatibleError,
    NoCandidatesError,
    UnsupportedFormatError,
    ValidationError,
)
from .hsc import ContainerHeader, ExampleRecord, problem_matrix
from .model import RetrieverModel, check_container_compat, embed_batch, model_digest

INDEX_MAGIC = b"DTRI"
INDEX_VERSION = 1

SIMILARITIES = ("dot", "cosine")
_SIM_CODES = {"dot": 0, "cosine": 1}
_SIM_NAMES = {v: k for k, v in _SIM_CODES.items()}

_NORM_EPS = 1e-12


def id_sort_ranks(ids: list[str]) -> np.ndarray:
    """Rank of each id in ascending lexicographic order; the tie-break key."""
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    ranks = np.empty(len(ids), dtype=np.int64)
    for rank, idx in enumerate(order):
        ranks[idx] = rank
    return ranks


def topk_by_score(scores: np.ndarray, ranks: np.ndarray, candidates: np.ndarray,
                  k: int) -> np.ndarray:
    """Indices of the top-k candidates: score descending, id rank ascending."""
    order = np.lexsort((ranks[candidates], -scores[candidates]))
    return candidates[order[:k]]


@dataclass(frozen=True)
class RetrievalFilter:
    """Composable candidate admission rule."""

    exclude_schemas: frozenset[str] = frozenset()
    only_schemas: frozenset[str] | None = None
    exclude_ids: frozenset[str] = frozenset()

    @classmethod
    def none(cls) -> "RetrievalFilter":
        return cls()

    @classmethod
    def ood(cls, query_schema: str) -> "RetrievalFilter":
        """Out-of-domain: drop every candidate sharing the query's schema."""
        return cls(exclude_schemas=frozenset({query_schema}))

    @classmethod
    def in_domain(cls, query_schema: str, query_id: str | None = None) -> "RetrievalFilter":
        """Same schema only, minus the query itself when its id is known."""
        exclude = frozenset({query_id}) if query_id is not None else frozenset()
        return cls(only_schemas=frozenset({query_schema}), exclude_ids=exclude)

    def admits(self, rec_id: str, schema_id: str) -> bool:
        if rec_id in self.exclude_ids:
            return False
        if schema_id in self.exclude_schemas:
            return False
        if self.only_schemas is not None and schema_id not in self.only_schemas:
            return False
        return True

    def describe(self) -> str:
        parts = []
        if self.exclude_schemas:
            parts.append(f"exclude_schemas={sorted(self.exclude_schemas)}")
        if self.only_schemas is not None:
            parts.append(f"only_schemas={sorted(self.only_schemas)}")
        if self.exclude_ids:
            parts.append(f"exclude_ids={sorted(self.exclude_ids)}")
        return " ".join(parts) if parts else "unfiltered"


@dataclass
class RetrievalResult:
    query_id: str | None
    filter_desc: str
    hits: list[tuple[str, float]]


@dataclass
class RetrievalIndex:
    matrix: np.ndarray            # [n, embed] float32
    ids: list[str]
    schema_ids: list[str]
    similarity: str
    digest: bytes
    _matrix64: np.ndarray | None = field(default=None, repr=False)
    _ranks: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.matrix.shape[0]

    def matrix64(self) -> np.ndarray:
        if self._matrix64 is None:
            self._matrix64 = self.matrix.astype(np.float64)
        return self._matrix64

    def ranks(self) -> np.ndarray:
        if self._ranks is None:
            self._ranks = id_sort_ranks(self.ids)
        return self._ranks

    def validate(self) -> None:
        if self.similarity not in SIMILARITIES:
            raise ValidationError(f"bad similarity {self.similarity!r}")
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids) \
                or len(self.ids) != len(self.schema_ids):
            raise ValidationError("index table sizes disagree")
        if len(self.ids) == 0:
            raise ValidationError("index holds no candidates")
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("duplicate candidate ids in index")
        if not np.isfinite(self.matrix).all():
            raise ValidationError("non-finite values in index matrix")


def build_index(model: RetrieverModel, header: ContainerHeader,
                records: list[ExampleRecord], similarity: str = "cosine"
                ) -> RetrievalIndex:
    """Embed a corpus and freeze it into a queryable index."""
    if similarity not in SIMILARITIES:
        raise ValidationError(f"similarity must be one of {SIMILARITIES}, got {similarity!r}")
    if not records:
        raise ValidationError("cannot index an empty corpus")
    check_container_compat(model, header)
    emb = embed_batch(model, problem_matrix(records, model.pooling))
    if similarity == "cosine":
        norms = np.linalg.norm(emb, axis=1)
        degenerate = norms <= _NORM_EPS
        safe = np.where(degenerate, 1.0, norms)
        emb = np.where(degenerate[:, None], 0.0, emb / safe[:, None])
    index = RetrievalIndex(
        matrix=emb.astype(np.float32),
        ids=[rec.id for rec in records],
        schema_ids=[rec.schema_id for rec in records],
        similarity=similarity,
        digest=model_digest(model),
    )
    index.validate()
    return index


def check_index_model_compat(index: RetrievalIndex, model: RetrieverModel) -> None:
    if index.digest != model_digest(model):
        raise IncompatibleError("index was built by a model with a different configuration")
    if index.matrix.shape[1] != model.dims[2]:
        raise IncompatibleError(
            f"index embedding dim {index.matrix.shape[1]} != model embed {model.dims[2]}"
        )


def retrieve(index: RetrievalIndex, query_emb: np.ndarray, k: int,
             filt: RetrievalFilter | None = None, query_id: str | None = None
             ) -> RetrievalResult:
    """Exact top-k scan. Raises NoCandidatesError if the filter admits nothing."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    q = np.asarray(query_emb, dtype=np.float64).ravel()
    if q.shape[0] != index.matrix.shape[1]:
        raise ValidationError(
            f"query dim {q.shape[0]} != index embedding dim {index.matrix.shape[1]}"
        )
    if not np.isfinite(q).all():
        raise ValidationError("non-finite values in query embedding")
    filt = filt or RetrievalFilter.none()

    admitted = np.fromiter(
        (i for i in range(len(index)) if filt.admits(index.ids[i], index.schema_ids[i])),
        dtype=np.intp,
    )
    if admitted.size == 0:
        raise NoCandidatesError(
            f"filter ({filt.describe()}) admits no candidates"
            + (f" for query {query_id!r}" if query_id else "")
        )

    if index.similarity == "cosine":
        n = float(np.linalg.norm(q))
        q = np.zeros_like(q) if n <= _NORM_EPS else q / n
    scores = index.matrix64() @ q
    top = topk_by_score(scores, index.ranks(), admitted, k)
    return RetrievalResult(
        query_id=query_id,
        filter_desc=filt.describe(),
        hits=[(index.ids[i], float(scores[i])) for i in top],
    )


def _write_str_block(out: bytearray, s: str) -> None:
    b = s.encode("utf-8")
    out += struct.pack("<I", len(b))
    out += b


def save_index(index: RetrievalIndex, path: str) -> None:
    index.validate()
    out = bytearray()
    out += struct.pack(
        "<4sIIIB", INDEX_MAGIC, INDEX_VERSION, len(index), index.matrix.shape[1],
        _SIM_CODES[index.similarity],
    )
    if len(index.digest) != 32:
        raise ValidationError("model digest must be 32 bytes")
    out += index.digest
    for s in index.ids:
        _write_str_block(out, s)
    for s in index.schema_ids:
        _write_str_block(out, s)
    out += np.ascontiguousarray(index.matrix, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


def load_index(path: str) -> RetrievalIndex:
    with open(path, "rb") as f:
        data = f.read()
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(data):
            raise CorruptionError(f"{path}: truncated while reading {what}")
        out = data[pos:pos + n]
        pos += n
        return out

    def take_str(what: str) -> str:
        (n,) = struct.unpack("<I", take(4, f"{what} length"))
        try:
            return take(n, what).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorruptionError(f"{path}: {what} is not valid UTF-8") from e

    head_fmt = "<4sIIIB"
    magic, version, n, embed, sim_code = struct.unpack(
        head_fmt, take(struct.calcsize(head_fmt), "header")
    )
    if magic != INDEX_MAGIC:
        raise UnsupportedFormatError(f"{path}: bad magic {magic!r}, expected {INDEX_MAGIC!r}")
    if version != INDEX_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {version}")
    if sim_code not in _SIM_NAMES:
        raise CorruptionError(f"{path}: bad similarity code {sim_code}")
    if n == 0 or embed == 0:
        raise CorruptionError(f"{path}: zero geometry in header")
    digest = take(32, "model digest")
    ids = [take_str(f"id {i}") for i in range(n)]
    schema_ids = [take_str(f"schema id {i}") for i in range(n)]
    raw = take(4 * n * embed, "embedding matrix")
    matrix = np.frombuffer(raw, dtype="<f4").reshape(n, embed).copy()
    if pos != len(data):
        raise CorruptionError(f"{path}: {len(data) - pos} trailing bytes")

    index = RetrievalIndex(
        matrix=matrix, ids=ids, schema_ids=schema_ids,
        similarity=_SIM_NAMES[sim_code], digest=digest,
    )
    try:
        index.validate()
    except ValidationError as e:
        raise CorruptionError(f"{path}: {e}") from e
    return index
