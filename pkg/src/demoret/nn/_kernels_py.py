"""Numpy reference kernels.

These are the fallback implementations of the four hot operations; the
compiled module in _kernels.pyx exposes the same functions with the same
contracts. Everything here works on float64 C-contiguous arrays and performs
no validation: callers in nn.core own the checks.

Activation codes: 0 = relu, 1 = gelu (exact, erf-based). The relu derivative
at exactly zero is taken as 0.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

ACT_RELU = 0
ACT_GELU = 1

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)

NORM_EPS = 1e-12


def _act(z: np.ndarray, kind: int) -> np.ndarray:
    if kind == ACT_RELU:
        return np.maximum(z, 0.0)
    return 0.5 * z * (1.0 + erf(z * _INV_SQRT2))


def _act_grad(z: np.ndarray, kind: int) -> np.ndarray:
    if kind == ACT_RELU:
        return (z > 0.0).astype(np.float64)
    return 0.5 * (1.0 + erf(z * _INV_SQRT2)) + z * np.exp(-0.5 * z * z) * _INV_SQRT2PI


def mlp_forward_batch(x, w1, b1, w2, b2, w3, b3, activation):
    """Three-layer MLP forward. Returns (y, z1, z2); z1/z2 are pre-activations."""
    z1 = x @ w1.T + b1
    z2 = _act(z1, activation) @ w2.T + b2
    y = _act(z2, activation) @ w3.T + b3
    return y, z1, z2


def mlp_backward_batch(x, z1, z2, w1, w2, w3, dy, activation):
    """Gradients of the forward pass. Activations are recomputed from z1/z2.

    Returns (dw1, db1, dw2, db2, dw3, db3, dx).
    """
    a1 = _act(z1, activation)
    a2 = _act(z2, activation)
    dw3 = dy.T @ a2
    db3 = dy.sum(axis=0)
    dz2 = (dy @ w3) * _act_grad(z2, activation)
    dw2 = dz2.T @ a1
    db2 = dz2.sum(axis=0)
    dz1 = (dz2 @ w2) * _act_grad(z1, activation)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)
    dx = dz1 @ w1
    return dw1, db1, dw2, db2, dw3, db3, dx


def adamw_update(p, g, m, v, t, lr, weight_decay, beta1, beta2, eps):
    """One decoupled-weight-decay Adam step, in place on p, m and v.

    t is the step count after increment (first call passes t=1). Weight decay
    is applied directly to the parameter, outside the moment estimates.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * (mhat / (np.sqrt(vhat) + eps) + weight_decay * p)


def contrastive_loss_grad(anchor, pos, neg, tau, normalize):
    """Multi-positive contrastive loss over one anchor's candidate pool.

    The pool is the anchor's positives followed by its negatives; each
    positive in turn plays the numerator against the whole pool:

        loss = -sum_i log( exp(s_i/tau) / sum_j exp(s_j/tau) ),  i over positives

    with s the (optionally L2-normalized) dot similarity to the anchor.
    Vectors with norm <= 1e-12 normalize to zero and receive zero gradient.

    Returns (loss, d_anchor, d_pos, d_neg).
    """
    n_pos = pos.shape[0]
    cand = np.concatenate([pos, neg], axis=0)
    n_all = cand.shape[0]

    if normalize:
        a_norm = float(np.linalg.norm(anchor))
        a_deg = a_norm <= NORM_EPS
        ua = np.zeros_like(anchor) if a_deg else anchor / a_norm
        c_norms = np.linalg.norm(cand, axis=1)
        c_deg = c_norms <= NORM_EPS
        safe = np.where(c_deg, 1.0, c_norms)
        uc = np.where(c_deg[:, None], 0.0, cand / safe[:, None])
        s = uc @ ua
    else:
        ua = anchor
        uc = cand
        s = cand @ anchor

    logits = s / tau
    mx = float(logits.max())
    e = np.exp(logits - mx)
    z = float(e.sum())
    log_z = mx + np.log(z)
    q = e / z

    loss = n_pos * log_z - float(logits[:n_pos].sum())

    dlogits = n_pos * q
    dlogits[:n_pos] -= 1.0
    ds = dlogits / tau

    if normalize:
        g_ua = uc.T @ ds
        if a_deg:
            d_anchor = np.zeros_like(anchor)
        else:
            d_anchor = (g_ua - float(g_ua @ ua) * ua) / a_norm
        g_uc = np.outer(ds, ua)
        proj = np.sum(g_uc * uc, axis=1)
        d_cand = (g_uc - proj[:, None] * uc) / safe[:, None]
        d_cand[c_deg] = 0.0
    else:
        d_anchor = cand.T @ ds
        d_cand = np.outer(ds, anchor)

    return loss, d_anchor, d_cand[:n_pos].copy(), d_cand[n_pos:n_all].copy()
