"""Retriever model: per-layer MLP heads combined by softmax layer weights.

The embedding of an example is sum_l softmax(z)_l * MLP_l(h_l) where h_l is
the pooled hidden state of kept layer l. Parameters are stored float32 in
checkpoints; all arithmetic runs in float64.

Checkpoint layout ("DTRM", little-endian):

    magic      4 bytes  b"DTRM"
    version    u32      1
    dim        u32      input dim per layer
    hidden     u32      MLP hidden width
    embed      u32      output embedding dim
    l_kept     u16      number of kept layers
    layer_ids  u16 * l_kept, strictly increasing
    pooling    u8       0=mean 1=eos
    activation u8       0=relu 1=gelu
    step       u64      training step the snapshot was taken at
    digest     32 bytes sha256 over the canonical config string
    per layer: w1,b1,w2,b2,w3,b3 as float32, then layer logits float32[l_kept]
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ConfigError,
    CorruptionError,
    IncompatibleError,
    ShapeError,
    UnsupportedFormatError,
    ValidationError,
)
from .hsc import POOLING_MODES, ContainerHeader, ExampleRecord
from .nn.core import ACTIVATIONS, MlpCache, MlpParams, init_mlp_params, mlp_backward, mlp_forward, softmax
from .seeding import rng_for

CKPT_MAGIC = b"DTRM"
CKPT_VERSION = 1

_POOL_CODES = {"mean": 0, "eos": 1}
_POOL_NAMES = {v: k for k, v in _POOL_CODES.items()}
_ACT_NAMES = {v: k for k, v in ACTIVATIONS.items()}


@dataclass(frozen=True)
class ModelConfig:
    dim: int
    layer_ids: tuple[int, ...]
    hidden: int = 1024
    embed: int = 512
    pooling: str = "eos"
    activation: str = "relu"
    seed: int = 0

    def validate(self) -> None:
        if min(self.dim, self.hidden, self.embed) < 1:
            raise ConfigError(
                f"dims must be positive: dim={self.dim} hidden={self.hidden} embed={self.embed}"
            )
        ids = tuple(int(i) for i in self.layer_ids)
        if not ids:
            raise ConfigError("layer_ids must be non-empty")
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ConfigError(f"layer_ids must be strictly increasing: {ids}")
        if any(i < 0 or i > 0xFFFF for i in ids):
            raise ConfigError(f"layer_ids out of range: {ids}")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"pooling must be one of {POOLING_MODES}, got {self.pooling!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(
                f"activation must be one of {sorted(ACTIVATIONS)}, got {self.activation!r}"
            )


@dataclass
class RetrieverModel:
    layers: list[MlpParams]
    layer_logits: np.ndarray
    layer_ids: tuple[int, ...]
    pooling: str
    activation: str

    @property
    def dims(self) -> tuple[int, int, int]:
        """(dim, hidden, embed)."""
        return self.layers[0].dims

    @property
    def l_kept(self) -> int:
        return len(self.layer_ids)

    def layer_weights(self) -> np.ndarray:
        return softmax(self.layer_logits)

    def param_count(self) -> int:
        return sum(p.size() for p in self.layers) + self.layer_logits.size

    def astype(self, dtype) -> "RetrieverModel":
        return RetrieverModel(
            layers=[p.astype(dtype) for p in self.layers],
            layer_logits=self.layer_logits.astype(dtype),
            layer_ids=self.layer_ids, pooling=self.pooling, activation=self.activation,
        )

    def config(self) -> ModelConfig:
        d, h, e = self.dims
        return ModelConfig(dim=d, hidden=h, embed=e, layer_ids=self.layer_ids,
                           pooling=self.pooling, activation=self.activation)


def init_model(config: ModelConfig, dtype=np.float32) -> RetrieverModel:
    """Seeded init: Kaiming-uniform weights, zero biases, zero layer logits."""
    config.validate()
    rng = rng_for(config.seed, "init")
    layers = [
        init_mlp_params(rng, config.dim, config.hidden, config.embed, dtype=dtype)
        for _ in config.layer_ids
    ]
    return RetrieverModel(
        layers=layers,
        layer_logits=np.zeros(len(config.layer_ids), dtype=dtype),
        layer_ids=tuple(int(i) for i in config.layer_ids),
        pooling=config.pooling,
        activation=config.activation,
    )


def model_digest(model: RetrieverModel) -> bytes:
    """Config identity: stable across runs, independent of parameter values."""
    d, h, e = model.dims
    text = (
        f"dtrm{CKPT_VERSION}|dim={d}|hidden={h}|embed={e}"
        f"|layers={','.join(str(i) for i in model.layer_ids)}"
        f"|pooling={model.pooling}|activation={model.activation}"
    )
    return hashlib.sha256(text.encode("ascii")).digest()


def check_container_compat(model: RetrieverModel, header: ContainerHeader) -> None:
    """Model must agree with a container on layers, dim and pooling mode."""
    if header.layer_ids != model.layer_ids:
        raise IncompatibleError(
            f"container layers {header.layer_ids} != model layers {model.layer_ids}"
        )
    if header.dim != model.dims[0]:
        raise IncompatibleError(f"container dim {header.dim} != model dim {model.dims[0]}")
    if model.pooling not in header.pooling_modes:
        raise IncompatibleError(
            f"container lacks pooling mode {model.pooling!r} (has {header.pooling_modes})"
        )


# ---------------------------------------------------------------------------
# Embedding (forward and backward)

@dataclass
class EmbedCache:
    """Saved tensors from embed_batch_with_cache, for the backward pass."""

    mlp_caches: list[MlpCache]
    layer_out: np.ndarray      # [l_kept, n, embed]
    weights: np.ndarray        # [l_kept]


@dataclass
class ModelGrads:
    layers: list[MlpParams]
    layer_logits: np.ndarray


def _check_states(model: RetrieverModel, states: np.ndarray) -> np.ndarray:
    s = np.asarray(states, dtype=np.float64)
    if s.ndim != 3 or s.shape[1] != model.l_kept or s.shape[2] != model.dims[0]:
        raise ShapeError(
            f"states shape {np.asarray(states).shape} does not match "
            f"(n, {model.l_kept}, {model.dims[0]})"
        )
    return s


def embed_batch_with_cache(model: RetrieverModel, states: np.ndarray
                           ) -> tuple[np.ndarray, EmbedCache]:
    """Embed [n, l_kept, dim] states; returns ([n, embed], cache)."""
    s = _check_states(model, states)
    n = s.shape[0]
    w = model.layer_weights()
    emb = np.zeros((n, model.dims[2]), dtype=np.float64)
    outs = np.empty((model.l_kept, n, model.dims[2]), dtype=np.float64)
    caches: list[MlpCache] = []
    for li, params in enumerate(model.layers):
        y, cache = mlp_forward(params, s[:, li, :], model.activation)
        outs[li] = y
        caches.append(cache)
        emb += w[li] * y
    return emb, EmbedCache(mlp_caches=caches, layer_out=outs, weights=w)


def embed_batch(model: RetrieverModel, states: np.ndarray) -> np.ndarray:
    """Embed [n, l_kept, dim] pooled states to [n, embed] float64."""
    emb, _ = embed_batch_with_cache(model, states)
    return emb


def embed_backward(model: RetrieverModel, cache: EmbedCache, grad_emb: np.ndarray
                   ) -> ModelGrads:
    """Gradients of sum-over-batch loss w.r.t. all model parameters.

    grad_emb is [n, embed], the loss gradient at the combined embeddings.
    """
    g = np.asarray(grad_emb, dtype=np.float64)
    if g.shape != (cache.layer_out.shape[1], cache.layer_out.shape[2]):
        raise ShapeError(
            f"grad_emb shape {g.shape} does not match embeddings "
            f"{(cache.layer_out.shape[1], cache.layer_out.shape[2])}"
        )
    w = cache.weights
    layer_grads: list[MlpParams] = []
    dw = np.empty_like(w)
    for li, params in enumerate(model.layers):
        dw[li] = float(np.sum(g * cache.layer_out[li]))
        g_out = w[li] * g
        grads, _ = mlp_backward(params, cache.mlp_caches[li], g_out, model.activation)
        layer_grads.append(grads)
    # softmax backward: dz_j = w_j * (dw_j - w . dw)
    dz = w * (dw - float(w @ dw))
    return ModelGrads(layers=layer_grads, layer_logits=dz)


def embed_record(model: RetrieverModel, record: ExampleRecord) -> np.ndarray:
    """Embed one container record using the model's pooling mode."""
    if model.pooling not in record.problem_states:
        raise ValidationError(
            f"record {record.id!r} lacks pooling mode {model.pooling!r}"
        )
    states = record.problem_states[model.pooling]
    if states.shape != (model.l_kept, model.dims[0]):
        raise IncompatibleError(
            f"record {record.id!r} states {states.shape} do not match model "
            f"({model.l_kept}, {model.dims[0]})"
        )
    return embed_batch(model, states[None, :, :].astype(np.float64))[0]


# ---------------------------------------------------------------------------
# Flat parameter vector (training and finite differences use this view)

def flatten_params(model: RetrieverModel) -> np.ndarray:
    """All parameters as one float64 vector: per layer w1,b1,w2,b2,w3,b3, then logits."""
    parts = [a.ravel() for p in model.layers for a in p.arrays()]
    parts.append(np.asarray(model.layer_logits).ravel())
    return np.concatenate(parts).astype(np.float64)


def flatten_grads(grads: ModelGrads) -> np.ndarray:
    parts = [a.ravel() for p in grads.layers for a in p.arrays()]
    parts.append(np.asarray(grads.layer_logits).ravel())
    return np.concatenate(parts).astype(np.float64)


def assign_flat_params(model: RetrieverModel, flat: np.ndarray) -> None:
    """Scatter a flat vector back into the model, preserving each array's dtype."""
    flat = np.asarray(flat)
    if flat.shape != (model.param_count(),):
        raise ShapeError(f"flat vector {flat.shape} != param count {model.param_count()}")
    pos = 0
    for p in model.layers:
        for a in p.arrays():
            n = a.size
            a[...] = flat[pos:pos + n].reshape(a.shape).astype(a.dtype)
            pos += n
    n = model.layer_logits.size
    model.layer_logits[...] = flat[pos:pos + n].astype(model.layer_logits.dtype)


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(model: RetrieverModel, step: int, path: str) -> None:
    """Write a float32 snapshot of the model at a training step."""
    if step < 0:
        raise ValidationError(f"step must be non-negative, got {step}")
    for p in model.layers:
        for a in p.arrays():
            if not np.isfinite(a).all():
                raise ValidationError("model holds non-finite parameters; refusing to save")
    if not np.isfinite(model.layer_logits).all():
        raise ValidationError("layer logits hold non-finite values; refusing to save")

    d, h, e = model.dims
    out = bytearray()
    out += struct.pack("<4sIIIIH", CKPT_MAGIC, CKPT_VERSION, d, h, e, model.l_kept)
    out += struct.pack(f"<{model.l_kept}H", *model.layer_ids)
    out += struct.pack("<BBQ", _POOL_CODES[model.pooling], ACTIVATIONS[model.activation], step)
    out += model_digest(model)
    for p in model.layers:
        for a in p.arrays():
            out += np.ascontiguousarray(a, dtype="<f4").tobytes()
    out += np.ascontiguousarray(model.layer_logits, dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(bytes(out))


def load_checkpoint(path: str) -> tuple[RetrieverModel, int]:
    """Read a checkpoint; returns (model, step). Parameters come back float32."""
    with open(path, "rb") as f:
        data = f.read()

    def take(pos: int, n: int, what: str) -> tuple[bytes, int]:
        if pos + n > len(data):
            raise CorruptionError(f"{path}: truncated while reading {what}")
        return data[pos:pos + n], pos + n

    head_fmt = "<4sIIIIH"
    raw, pos = take(0, struct.calcsize(head_fmt), "header")
    magic, version, d, h, e, l_kept = struct.unpack(head_fmt, raw)
    if magic != CKPT_MAGIC:
        raise UnsupportedFormatError(f"{path}: bad magic {magic!r}, expected {CKPT_MAGIC!r}")
    if version != CKPT_VERSION:
        raise UnsupportedFormatError(f"{path}: unsupported version {version}")
    if l_kept == 0 or min(d, h, e) == 0:
        raise CorruptionError(f"{path}: zero geometry in header")
    raw, pos = take(pos, 2 * l_kept, "layer ids")
    layer_ids = struct.unpack(f"<{l_kept}H", raw)
    if any(b <= a for a, b in zip(layer_ids, layer_ids[1:])):
        raise CorruptionError(f"{path}: layer ids not strictly increasing")
    raw, pos = take(pos, struct.calcsize("<BBQ"), "flags")
    pool_code, act_code, step = struct.unpack("<BBQ", raw)
    if pool_code not in _POOL_NAMES:
        raise CorruptionError(f"{path}: bad pooling code {pool_code}")
    if act_code not in _ACT_NAMES:
        raise CorruptionError(f"{path}: bad activation code {act_code}")
    digest, pos = take(pos, 32, "config digest")

    def tensor(pos: int, shape: tuple[int, ...], what: str) -> tuple[np.ndarray, int]:
        n = int(np.prod(shape))
        raw, pos = take(pos, 4 * n, what)
        a = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        if not np.isfinite(a).all():
            raise ValidationError(f"{path}: non-finite values in {what}")
        return a, pos

    layers: list[MlpParams] = []
    for li in range(l_kept):
        w1, pos = tensor(pos, (h, d), f"layer {li} w1")
        b1, pos = tensor(pos, (h,), f"layer {li} b1")
        w2, pos = tensor(pos, (h, h), f"layer {li} w2")
        b2, pos = tensor(pos, (h,), f"layer {li} b2")
        w3, pos = tensor(pos, (e, h), f"layer {li} w3")
        b3, pos = tensor(pos, (e,), f"layer {li} b3")
        layers.append(MlpParams(w1, b1, w2, b2, w3, b3))
    logits, pos = tensor(pos, (l_kept,), "layer logits")
    if pos != len(data):
        raise CorruptionError(f"{path}: {len(data) - pos} trailing bytes")

    model = RetrieverModel(
        layers=layers, layer_logits=logits, layer_ids=tuple(layer_ids),
        pooling=_POOL_NAMES[pool_code], activation=_ACT_NAMES[act_code],
    )
    if model_digest(model) != digest:
        raise CorruptionError(f"{path}: config digest does not match header fields")
    return model, step
