"""Sequence pooling over one layer's token-state matrix.

Both functions take a [n_tokens, dim] float32 matrix covering the real
tokens of one sequence (padding already sliced away) and return a [dim]
float32 vector. Mean pooling averages every row, special tokens included;
EOS pooling takes the final row. For a single-token sequence the two are
identical by construction.
"""

from __future__ import annotations

import numpy as np

POOLING_MODES = ("mean", "eos")


def mean_pool(token_states: np.ndarray) -> np.ndarray:
    if token_states.ndim != 2 or token_states.shape[0] == 0:
        raise ValueError(f"expected a non-empty [n_tokens, dim] matrix, got {token_states.shape}")
    return token_states.mean(axis=0, dtype=np.float64).astype(np.float32)


def eos_pool(token_states: np.ndarray) -> np.ndarray:
    if token_states.ndim != 2 or token_states.shape[0] == 0:
        raise ValueError(f"expected a non-empty [n_tokens, dim] matrix, got {token_states.shape}")
    return np.asarray(token_states[-1], dtype=np.float32)


def pool(token_states: np.ndarray, mode: str) -> np.ndarray:
    if mode == "mean":
        return mean_pool(token_states)
    if mode == "eos":
        return eos_pool(token_states)
    raise ValueError(f"pooling mode must be one of {POOLING_MODES}, got {mode!r}")
