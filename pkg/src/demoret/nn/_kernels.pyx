# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: same contracts as _kernels_py, GEMMs via BLAS.

All matrices are float64 C-contiguous. The dgemm wrapper maps row-major
products onto the column-major BLAS call by swapping the operands.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport erf, exp, log, pow, sqrt
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

ACT_RELU = 0
ACT_GELU = 1

cdef double _INV_SQRT2 = 0.7071067811865475244
cdef double _INV_SQRT2PI = 0.3989422804014326779
cdef double NORM_EPS = 1e-12


cdef inline double _act_one(double z, int kind) noexcept nogil:
    if kind == 0:
        return z if z > 0.0 else 0.0
    return 0.5 * z * (1.0 + erf(z * _INV_SQRT2))


cdef inline double _act_grad_one(double z, int kind) noexcept nogil:
    if kind == 0:
        return 1.0 if z > 0.0 else 0.0
    return 0.5 * (1.0 + erf(z * _INV_SQRT2)) + z * exp(-0.5 * z * z) * _INV_SQRT2PI


cdef void _matmul(const double* a, const double* b, double* c,
                  int m, int n, int k, bint trans_a, bint trans_b,
                  int lda, int ldb, double beta) noexcept nogil:
    # row-major C[m,n] (+)= opA(A)[m,k] @ opB(B)[k,n]; lda/ldb are the
    # arrays' own row lengths. Swapped-operand call: BLAS sees the
    # column-major transposes, which lands the product back in row-major.
    cdef char ta
    cdef char tb
    if trans_a:
        ta = b'T'
    else:
        ta = b'N'
    if trans_b:
        tb = b'T'
    else:
        tb = b'N'
    cdef double alpha = 1.0
    dgemm(&tb, &ta, &n, &m, &k, &alpha,
          <double*> b, &ldb, <double*> a, &lda, &beta, c, &n)


cdef void _apply_act(const double* z, double* out, Py_ssize_t n, int kind) noexcept nogil:
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = _act_one(z[i], kind)


cdef void _add_bias(double* z, const double* b, Py_ssize_t rows, Py_ssize_t cols) noexcept nogil:
    cdef Py_ssize_t i, j
    for i in range(rows):
        for j in range(cols):
            z[i * cols + j] += b[j]


def mlp_forward_batch(object x_in, object w1_in, object b1_in, object w2_in,
                      object b2_in, object w3_in, object b3_in, int activation):
    """Three-layer MLP forward. Returns (y, z1, z2); z1/z2 are pre-activations."""
    cdef cnp.ndarray[double, ndim=2, mode="c"] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w1 = np.ascontiguousarray(w1_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] b1 = np.ascontiguousarray(b1_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w2 = np.ascontiguousarray(w2_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] b2 = np.ascontiguousarray(b2_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w3 = np.ascontiguousarray(w3_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] b3 = np.ascontiguousarray(b3_in, dtype=np.float64)

    cdef int n = x.shape[0], d = x.shape[1]
    cdef int h = w1.shape[0], e = w3.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] z1 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] a1 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] z2 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] a2 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] y = np.empty((n, e), dtype=np.float64)
    if n == 0:
        return y, z1, z2

    with nogil:
        _matmul(&x[0, 0], &w1[0, 0], &z1[0, 0], n, h, d, False, True, d, d, 0.0)
        _add_bias(&z1[0, 0], &b1[0], n, h)
        _apply_act(&z1[0, 0], &a1[0, 0], n * h, activation)
        _matmul(&a1[0, 0], &w2[0, 0], &z2[0, 0], n, h, h, False, True, h, h, 0.0)
        _add_bias(&z2[0, 0], &b2[0], n, h)
        _apply_act(&z2[0, 0], &a2[0, 0], n * h, activation)
        _matmul(&a2[0, 0], &w3[0, 0], &y[0, 0], n, e, h, False, True, h, h, 0.0)
        _add_bias(&y[0, 0], &b3[0], n, e)
    return y, z1, z2


def mlp_backward_batch(object x_in, object z1_in, object z2_in, object w1_in,
                       object w2_in, object w3_in, object dy_in, int activation):
    """Gradients of the forward pass; activations recomputed from z1/z2.

    Returns (dw1, db1, dw2, db2, dw3, db3, dx).
    """
    cdef cnp.ndarray[double, ndim=2, mode="c"] x = np.ascontiguousarray(x_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] z1 = np.ascontiguousarray(z1_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] z2 = np.ascontiguousarray(z2_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w1 = np.ascontiguousarray(w1_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w2 = np.ascontiguousarray(w2_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] w3 = np.ascontiguousarray(w3_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] dy = np.ascontiguousarray(dy_in, dtype=np.float64)

    cdef int n = x.shape[0], d = x.shape[1]
    cdef int h = w1.shape[0], e = w3.shape[0]

    cdef cnp.ndarray[double, ndim=2, mode="c"] a1 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] a2 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] dz2 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] dz1 = np.empty((n, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] dw1 = np.zeros((h, d), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] db1 = np.zeros(h, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] dw2 = np.zeros((h, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] db2 = np.zeros(h, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] dw3 = np.zeros((e, h), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] db3 = np.zeros(e, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] dx = np.zeros((n, d), dtype=np.float64)
    if n == 0:
        return dw1, db1, dw2, db2, dw3, db3, dx

    cdef Py_ssize_t i, j
    with nogil:
        _apply_act(&z1[0, 0], &a1[0, 0], n * h, activation)
        _apply_act(&z2[0, 0], &a2[0, 0], n * h, activation)

        # dw3 = dy.T @ a2 ; db3 = colsum(dy)
        _matmul(&dy[0, 0], &a2[0, 0], &dw3[0, 0], e, h, n, True, False, e, h, 0.0)
        for i in range(n):
            for j in range(e):
                db3[j] += dy[i, j]

        # dz2 = (dy @ w3) * act'(z2)
        _matmul(&dy[0, 0], &w3[0, 0], &dz2[0, 0], n, h, e, False, False, e, h, 0.0)
        for i in range(n):
            for j in range(h):
                dz2[i, j] *= _act_grad_one(z2[i, j], activation)
                db2[j] += dz2[i, j]

        # dw2 = dz2.T @ a1
        _matmul(&dz2[0, 0], &a1[0, 0], &dw2[0, 0], h, h, n, True, False, h, h, 0.0)

        # dz1 = (dz2 @ w2) * act'(z1)
        _matmul(&dz2[0, 0], &w2[0, 0], &dz1[0, 0], n, h, h, False, False, h, h, 0.0)
        for i in range(n):
            for j in range(h):
                dz1[i, j] *= _act_grad_one(z1[i, j], activation)
                db1[j] += dz1[i, j]

        # dw1 = dz1.T @ x ; dx = dz1 @ w1
        _matmul(&dz1[0, 0], &x[0, 0], &dw1[0, 0], h, d, n, True, False, h, d, 0.0)
        _matmul(&dz1[0, 0], &w1[0, 0], &dx[0, 0], n, d, h, False, False, h, d, 0.0)

    return dw1, db1, dw2, db2, dw3, db3, dx


def adamw_update(object p_in, object g_in, object m_in, object v_in, long t,
                 double lr, double weight_decay, double beta1, double beta2,
                 double eps):
    """One decoupled-weight-decay Adam step, in place on p, m and v."""
    cdef cnp.ndarray[double, ndim=1, mode="c"] p = np.ascontiguousarray(p_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] g = np.ascontiguousarray(g_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] m = np.ascontiguousarray(m_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] v = np.ascontiguousarray(v_in, dtype=np.float64)
    if p is not p_in or m is not m_in or v is not v_in:
        raise TypeError("adamw_update requires contiguous float64 arrays (in-place op)")

    cdef double c1 = 1.0 - pow(beta1, <double> t)
    cdef double c2 = 1.0 - pow(beta2, <double> t)
    cdef double mhat, vhat
    cdef Py_ssize_t i
    with nogil:
        for i in range(p.shape[0]):
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
            mhat = m[i] / c1
            vhat = v[i] / c2
            p[i] -= lr * (mhat / (sqrt(vhat) + eps) + weight_decay * p[i])


def contrastive_loss_grad(object anchor_in, object pos_in, object neg_in,
                          double tau, bint normalize):
    """Multi-positive contrastive loss for one anchor's candidate pool.

    Matches _kernels_py.contrastive_loss_grad: every positive in turn is the
    numerator against the full pool (positives then negatives); similarities
    are optionally L2-normalized with near-zero vectors mapped to zero.
    Returns (loss, d_anchor, d_pos, d_neg).
    """
    cdef cnp.ndarray[double, ndim=1, mode="c"] a = np.ascontiguousarray(anchor_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] pos = np.ascontiguousarray(pos_in, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] neg = np.ascontiguousarray(neg_in, dtype=np.float64)

    cdef int e = a.shape[0]
    cdef int n_pos = pos.shape[0]
    cdef int n_neg = neg.shape[0]
    cdef int n_all = n_pos + n_neg

    cdef cnp.ndarray[double, ndim=2, mode="c"] uc = np.empty((n_all, e), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ua = np.empty(e, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] norms = np.empty(n_all, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] s = np.empty(n_all, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] q = np.empty(n_all, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ds = np.empty(n_all, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] d_anchor = np.zeros(e, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] d_pos = np.zeros((n_pos, e), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] d_neg = np.zeros((n_neg, e), dtype=np.float64)

    cdef double a_norm = 0.0, acc, mx, zsum, log_z, loss, g_dot_ua, proj
    cdef bint a_deg = False
    cdef Py_ssize_t i, j
    cdef const double* src
    cdef double* drow

    with nogil:
        # normalized (or raw) anchor and candidates
        if normalize:
            for j in range(e):
                a_norm += a[j] * a[j]
            a_norm = sqrt(a_norm)
            a_deg = a_norm <= NORM_EPS
            for j in range(e):
                ua[j] = 0.0 if a_deg else a[j] / a_norm
        else:
            for j in range(e):
                ua[j] = a[j]

        for i in range(n_all):
            if i < n_pos:
                src = &pos[i, 0]
            else:
                src = &neg[i - n_pos, 0]
            if normalize:
                acc = 0.0
                for j in range(e):
                    acc += src[j] * src[j]
                norms[i] = sqrt(acc)
                if norms[i] <= NORM_EPS:
                    for j in range(e):
                        uc[i, j] = 0.0
                else:
                    for j in range(e):
                        uc[i, j] = src[j] / norms[i]
            else:
                for j in range(e):
                    uc[i, j] = src[j]
            acc = 0.0
            for j in range(e):
                acc += uc[i, j] * ua[j]
            s[i] = acc

        # stable log-sum-exp over logits s/tau
        mx = s[0] / tau
        for i in range(1, n_all):
            if s[i] / tau > mx:
                mx = s[i] / tau
        zsum = 0.0
        for i in range(n_all):
            q[i] = exp(s[i] / tau - mx)
            zsum += q[i]
        log_z = mx + log(zsum)
        loss = n_pos * log_z
        for i in range(n_pos):
            loss -= s[i] / tau
        for i in range(n_all):
            q[i] /= zsum
            ds[i] = n_pos * q[i]
            if i < n_pos:
                ds[i] -= 1.0
            ds[i] /= tau

        if normalize:
            # anchor: project out the radial component, then divide by the norm
            if not a_deg:
                for j in range(e):
                    acc = 0.0
                    for i in range(n_all):
                        acc += uc[i, j] * ds[i]
                    d_anchor[j] = acc
                g_dot_ua = 0.0
                for j in range(e):
                    g_dot_ua += d_anchor[j] * ua[j]
                for j in range(e):
                    d_anchor[j] = (d_anchor[j] - g_dot_ua * ua[j]) / a_norm
            for i in range(n_all):
                if norms[i] <= NORM_EPS:
                    continue
                if i < n_pos:
                    drow = &d_pos[i, 0]
                else:
                    drow = &d_neg[i - n_pos, 0]
                proj = 0.0
                for j in range(e):
                    proj += ds[i] * ua[j] * uc[i, j]
                for j in range(e):
                    drow[j] = (ds[i] * ua[j] - proj * uc[i, j]) / norms[i]
        else:
            for j in range(e):
                acc = 0.0
                for i in range(n_all):
                    acc += uc[i, j] * ds[i]
                d_anchor[j] = acc
            for i in range(n_all):
                if i < n_pos:
                    drow = &d_pos[i, 0]
                else:
                    drow = &d_neg[i - n_pos, 0]
                for j in range(e):
                    drow[j] = ds[i] * a[j]

    return loss, d_anchor, d_pos, d_neg
