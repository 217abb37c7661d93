# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-batch loss kernels.

Same signatures and results as ``cvcl._pykernels``; loops are fused so the
small K x K work does not pay numpy's per-call overhead.
"""
import numpy as np
cimport numpy as cnp
from cython cimport floating
from libc.math cimport exp, log, INFINITY

cnp.import_array()


def target_distribution(floating[:, ::1] H, double eps=1e-12):
    cdef Py_ssize_t m = H.shape[0], K = H.shape[1], i, j
    cdef double[::1] col = np.empty(K)
    cdef double r, u
    dtype = np.float64 if floating is double else np.float32
    out = np.empty((m, K), dtype=dtype)
    cdef floating[:, ::1] P = out
    for j in range(K):
        col[j] = eps
    for i in range(m):
        for j in range(K):
            col[j] += H[i, j]
    for i in range(m):
        r = 0.0
        for j in range(K):
            u = H[i, j] * H[i, j] / col[j]
            P[i, j] = u
            r += u
        for j in range(K):
            P[i, j] = P[i, j] / r
    return out


def target_distribution_backward(floating[:, ::1] H, floating[:, ::1] G, double eps=1e-12):
    cdef Py_ssize_t m = H.shape[0], K = H.shape[1], i, j
    cdef double[::1] col = np.empty(K)
    cdef double[::1] colterm = np.zeros(K)
    cdef double[::1] u = np.empty(K)
    cdef double r, gp, d
    dtype = np.float64 if floating is double else np.float32
    out = np.empty((m, K), dtype=dtype)
    cdef floating[:, ::1] dH = out
    for j in range(K):
        col[j] = eps
    for i in range(m):
        for j in range(K):
            col[j] += H[i, j]
    for i in range(m):
        r = 0.0
        for j in range(K):
            u[j] = H[i, j] * H[i, j] / col[j]
            r += u[j]
        gp = 0.0
        for j in range(K):
            gp += G[i, j] * u[j] / r
        for j in range(K):
            d = (G[i, j] - gp) / r
            dH[i, j] = 2.0 * d * H[i, j] / col[j]
            colterm[j] += d * H[i, j] * H[i, j]
    for j in range(K):
        colterm[j] /= col[j] * col[j]
    for i in range(m):
        for j in range(K):
            dH[i, j] = dH[i, j] - colterm[j]
    return out


def contrastive_pair(floating[:, ::1] A, floating[:, ::1] B, double tau, bint grad=True):
    # Gram products and the gradient go through BLAS; the per-column
    # log-sum-exp and softmax weights are the loop-heavy part done here
    cdef Py_ssize_t K = A.shape[1], j, k
    A64 = np.asarray(A, dtype=np.float64)
    B64 = np.asarray(B, dtype=np.float64)
    cdef double[:, ::1] S_aa = np.ascontiguousarray(A64.T @ A64) / tau
    cdef double[:, ::1] S_ab = np.ascontiguousarray(A64.T @ B64) / tau
    W_aa_arr = np.zeros((K, K))
    W_ab_arr = np.zeros((K, K))
    cdef double[:, ::1] W_aa = W_aa_arr
    cdef double[:, ::1] W_ab = W_ab_arr
    cdef double mx, T, loss = 0.0
    for k in range(K):
        mx = -INFINITY
        for j in range(K):
            if j != k and S_aa[j, k] > mx:
                mx = S_aa[j, k]
            if S_ab[j, k] > mx:
                mx = S_ab[j, k]
        T = 0.0
        for j in range(K):
            if j != k:
                W_aa[j, k] = exp(S_aa[j, k] - mx)
                T += W_aa[j, k]
            W_ab[j, k] = exp(S_ab[j, k] - mx)
            T += W_ab[j, k]
        loss += mx + log(T) - S_ab[k, k]
        for j in range(K):
            W_aa[j, k] /= T * K
            W_ab[j, k] /= T * K
        W_ab[k, k] -= 1.0 / K
    loss /= K
    if not grad:
        return loss, None, None
    dtype = np.float64 if floating is double else np.float32
    dA = (A64 @ (W_aa_arr + W_aa_arr.T) + B64 @ W_ab_arr.T) / tau
    dB = (A64 @ W_ab_arr) / tau
    return loss, dA.astype(dtype, copy=False), dB.astype(dtype, copy=False)


def consistency(floating[:, ::1] P, double eps=1e-12):
    cdef Py_ssize_t m = P.shape[0], K = P.shape[1], i, j
    cdef double[::1] q = np.zeros(K)
    cdef double value = 0.0, g
    dtype = np.float64 if floating is double else np.float32
    out = np.empty((m, K), dtype=dtype)
    cdef floating[:, ::1] dP = out
    for i in range(m):
        for j in range(K):
            q[j] += P[i, j]
    for j in range(K):
        q[j] /= m
        if q[j] > 0:
            value += q[j] * log(q[j])
    for j in range(K):
        g = (log(q[j] if q[j] > eps else eps) + 1.0) / m
        for i in range(m):
            dP[i, j] = g
    return value, out
