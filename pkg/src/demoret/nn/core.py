"""Core numerics: a three-layer MLP with analytic gradients, decoupled-decay
Adam, and the small vector ops shared across the package.

Storage convention: model parameters live in float32 on disk, but every
computation here happens in float64; public functions upcast their inputs and
return float64 arrays. The heavy lifting is delegated to the selected kernel
backend (compiled extension or numpy fallback, see nn.backend).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError, ValidationError
from .backend import kernels

ACTIVATIONS = {"relu": 0, "gelu": 1}

NORM_EPS = 1e-12


def _act_code(activation: str) -> int:
    try:
        return ACTIVATIONS[activation]
    except KeyError:
        raise ConfigError(
            f"unknown activation {activation!r}; expected one of {sorted(ACTIVATIONS)}"
        ) from None


def _as_f64(a: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


@dataclass
class MlpParams:
    """Weights of one projection head: in -> hidden -> hidden -> out.

    Weight matrices are stored with output rows (w1 is [hidden, in]), biases
    as flat vectors. The forward pass applies the activation after the first
    two linear layers only.
    """

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int]:
        """(in_dim, hidden_dim, out_dim)."""
        return self.w1.shape[1], self.w1.shape[0], self.w3.shape[0]

    def arrays(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3)

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(*(a.astype(dtype) for a in self.arrays()))

    def copy(self) -> "MlpParams":
        return MlpParams(*(a.copy() for a in self.arrays()))

    def size(self) -> int:
        return sum(a.size for a in self.arrays())

    def check(self) -> None:
        d, h, e = self.dims
        expected = [(h, d), (h,), (h, h), (h,), (e, h), (e,)]
        got = [a.shape for a in self.arrays()]
        if got != expected:
            raise ShapeError(f"inconsistent MLP shapes {got}, expected {expected}")


def init_mlp_params(rng: np.random.Generator, in_dim: int, hidden: int, out_dim: int,
                    dtype=np.float32) -> MlpParams:
    """Kaiming-uniform fan-in init for weights, zeros for biases."""
    if min(in_dim, hidden, out_dim) < 1:
        raise ConfigError(f"dims must be positive, got {(in_dim, hidden, out_dim)}")

    def w(rows: int, cols: int) -> np.ndarray:
        bound = np.sqrt(6.0 / cols)
        return rng.uniform(-bound, bound, size=(rows, cols)).astype(dtype)

    return MlpParams(
        w1=w(hidden, in_dim), b1=np.zeros(hidden, dtype=dtype),
        w2=w(hidden, hidden), b2=np.zeros(hidden, dtype=dtype),
        w3=w(out_dim, hidden), b3=np.zeros(out_dim, dtype=dtype),
    )


@dataclass
class MlpCache:
    """Saved forward tensors: input and the two pre-activations, batched."""

    x: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    single: bool


def mlp_forward(params: MlpParams, x: np.ndarray, activation: str = "relu"
                ) -> tuple[np.ndarray, MlpCache]:
    """Forward pass for one vector [in_dim] or a batch [n, in_dim].

    Returns the output (matching the input's batchedness) and a cache for
    mlp_backward. Output and cache are float64.
    """
    code = _act_code(activation)
    params.check()
    xv = np.asarray(x)
    single = xv.ndim == 1
    if single:
        xv = xv[None, :]
    if xv.ndim != 2 or xv.shape[1] != params.dims[0]:
        raise ShapeError(
            f"input shape {np.asarray(x).shape} does not feed an MLP with in_dim {params.dims[0]}"
        )
    if not np.isfinite(xv).all():
        raise ValidationError("non-finite values in MLP input")
    xv = _as_f64(xv)
    p = [_as_f64(a) for a in params.arrays()]
    y, z1, z2 = kernels.mlp_forward_batch(xv, *p, code)
    cache = MlpCache(x=xv, z1=z1, z2=z2, single=single)
    return (y[0] if single else y), cache


def mlp_backward(params: MlpParams, cache: MlpCache, grad_out: np.ndarray,
                 activation: str = "relu") -> tuple[MlpParams, np.ndarray]:
    """Analytic gradients given upstream grad_out (same shape as the output).

    Returns (parameter gradients as an MlpParams, gradient w.r.t. the input).
    """
    code = _act_code(activation)
    dy = np.asarray(grad_out)
    if cache.single:
        if dy.ndim != 1:
            raise ShapeError("grad_out must be a vector for a single-vector forward")
        dy = dy[None, :]
    if dy.shape != (cache.x.shape[0], params.dims[2]):
        raise ShapeError(
            f"grad_out shape {np.asarray(grad_out).shape} does not match output "
            f"({cache.x.shape[0]}, {params.dims[2]})"
        )
    dy = _as_f64(dy)
    p = [_as_f64(a) for a in params.arrays()]
    dw1, db1, dw2, db2, dw3, db3, dx = kernels.mlp_backward_batch(
        cache.x, cache.z1, cache.z2, p[0], p[2], p[4], dy, code
    )
    grads = MlpParams(w1=dw1, b1=db1, w2=dw2, b2=db2, w3=dw3, b3=db3)
    return grads, (dx[0] if cache.single else dx)


@dataclass
class AdamWState:
    """Optimizer state over one flat float64 parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-4
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-8

    @classmethod
    def for_size(cls, n: int, **hyper) -> "AdamWState":
        state = cls(m=np.zeros(n, dtype=np.float64), v=np.zeros(n, dtype=np.float64), **hyper)
        state.validate()
        return state

    def validate(self) -> None:
        if self.lr <= 0 or self.epsilon <= 0:
            raise ConfigError(f"lr and epsilon must be positive (lr={self.lr}, eps={self.epsilon})")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas must lie in [0, 1): ({self.beta1}, {self.beta2})")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative: {self.weight_decay}")
        if self.m.shape != self.v.shape:
            raise ShapeError("moment buffers disagree in shape")


def adamw_step(state: AdamWState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """One optimizer step on a flat parameter vector; returns the new vector.

    Weight decay is decoupled: applied to the parameter directly, not mixed
    into the gradient moments. state.m/v/t are updated in place.
    """
    p = np.asarray(params)
    g = np.asarray(grads)
    if p.shape != g.shape or p.shape != state.m.shape:
        raise ShapeError(
            f"params {p.shape}, grads {g.shape} and state {state.m.shape} must agree"
        )
    if not np.isfinite(g).all():
        raise ValidationError("non-finite gradient passed to adamw_step")
    out = _as_f64(p).copy()
    state.t += 1
    kernels.adamw_update(
        out, _as_f64(g), state.m, state.v, state.t,
        state.lr, state.weight_decay, state.beta1, state.beta2, state.epsilon,
    )
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax of a 1-D logit vector (max subtraction, float64)."""
    z = np.asarray(logits, dtype=np.float64)
    if z.ndim != 1:
        raise ShapeError(f"softmax expects a vector, got shape {z.shape}")
    if z.size == 0:
        raise ValidationError("softmax of an empty vector")
    if not np.isfinite(z).all():
        raise ValidationError("non-finite logits in softmax")
    e = np.exp(z - z.max())
    return e / e.sum()


def l2_normalize(v: np.ndarray) -> tuple[np.ndarray, bool]:
    """Unit-normalize a vector; near-zero norm yields zeros and a True flag."""
    x = np.asarray(v, dtype=np.float64)
    if x.ndim != 1:
        raise ShapeError(f"l2_normalize expects a vector, got shape {x.shape}")
    n = float(np.linalg.norm(x))
    if n <= NORM_EPS:
        return np.zeros_like(x), True
    return x / n, False
