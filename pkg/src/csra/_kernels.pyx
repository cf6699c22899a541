# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops.

Every reduction runs left to right over its index, with no reassociation,
so results are bit-identical to a naive double loop.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, isinf

cnp.import_array()

NAME = "compiled"


def matvec(const double[:, ::1] M, const double[::1] v):
    cdef Py_ssize_t r = M.shape[0], c = M.shape[1], i, j
    cdef double acc
    out = np.empty(r, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(r):
            acc = 0.0
            for j in range(c):
                acc = acc + M[i, j] * v[j]
            o[i] = acc
    return out


def row_mean(const double[:, ::1] M):
    cdef Py_ssize_t r = M.shape[0], c = M.shape[1], i, j
    cdef double acc
    out = np.empty(r, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(r):
            acc = 0.0
            for j in range(c):
                acc = acc + M[i, j]
            o[i] = acc / c
    return out


def row_max(const double[:, ::1] M):
    cdef Py_ssize_t r = M.shape[0], c = M.shape[1], i, j
    cdef double best
    out = np.empty(r, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in range(r):
            best = M[i, 0]
            for j in range(1, c):
                if M[i, j] > best:
                    best = M[i, j]
            o[i] = best
    return out


def row_argmax(const double[:, ::1] M):
    cdef Py_ssize_t r = M.shape[0], c = M.shape[1], i, j, arg
    out = np.empty(r, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    with nogil:
        for i in range(r):
            arg = 0
            for j in range(1, c):
                if M[i, j] > M[i, arg]:
                    arg = j
            o[i] = arg
    return out


cdef inline void _softmax_row(const double* v, double* out, Py_ssize_t n,
                              double T, double* rsum_with, const double* weights) noexcept nogil:
    # out <- softmax(T * v); optional rsum_with[0] <- sum_k out[k] * weights[k]
    cdef Py_ssize_t k, arg = 0
    cdef double m = v[0], z = 0.0, acc = 0.0
    for k in range(1, n):
        if v[k] > m:
            m = v[k]
            arg = k
    if isinf(T):
        for k in range(n):
            out[k] = 0.0
        out[arg] = 1.0
        if rsum_with != NULL:
            rsum_with[0] = weights[arg]
        return
    for k in range(n):
        out[k] = exp(T * v[k] - T * m)
        z = z + out[k]
    for k in range(n):
        out[k] = out[k] / z
    if rsum_with != NULL:
        for k in range(n):
            acc = acc + out[k] * weights[k]
        rsum_with[0] = acc


def softmax(const double[::1] v, double T):
    cdef Py_ssize_t n = v.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        _softmax_row(&v[0], &o[0], n, T, NULL, NULL)
    return out


def head_forward(const double[:, ::1] W, const double[:, :, ::1] X,
                 double T, double lam, bint use_avg):
    """Logits of one head for a batch of flattened feature tensors.

    Returns ``(Y, S, A, R, G)``: logits [B, C], raw scores [B, C, n],
    attention [B, C, n], attention-weighted scores [B, C] and global
    features [B, d].
    """
    cdef Py_ssize_t B = X.shape[0], d = X.shape[1], n = X.shape[2]
    cdef Py_ssize_t C = W.shape[0], b, i, j, k
    cdef double acc, base
    Y_ = np.empty((B, C), dtype=np.float64)
    S_ = np.empty((B, C, n), dtype=np.float64)
    A_ = np.empty((B, C, n), dtype=np.float64)
    R_ = np.empty((B, C), dtype=np.float64)
    G_ = np.empty((B, d), dtype=np.float64)
    cdef double[:, ::1] Y = Y_, R = R_, G = G_
    cdef double[:, :, ::1] S = S_, A = A_
    with nogil:
        for b in range(B):
            for j in range(d):
                acc = 0.0
                for k in range(n):
                    acc = acc + X[b, j, k]
                G[b, j] = acc / n
            for i in range(C):
                for k in range(n):
                    acc = 0.0
                    for j in range(d):
                        acc = acc + W[i, j] * X[b, j, k]
                    S[b, i, k] = acc
                _softmax_row(&S[b, i, 0], &A[b, i, 0], n, T, &R[b, i], &S[b, i, 0])
                if use_avg:
                    base = 0.0
                    for j in range(d):
                        base = base + W[i, j] * G[b, j]
                    if lam == 0.0:
                        Y[b, i] = base
                    else:
                        Y[b, i] = base + lam * R[b, i]
                else:
                    Y[b, i] = lam * R[b, i]
    return Y_, S_, A_, R_, G_


def head_backward(const double[:, :, ::1] X, const double[:, ::1] G,
                  const double[:, :, ::1] S, const double[:, :, ::1] A,
                  const double[:, ::1] R, double T, double lam, bint use_avg,
                  const double[:, ::1] coef, double[:, ::1] out):
    """Accumulate ``sum_b coef[b, i] * dy[b, i] / dm_i`` into ``out`` [C, d].

    Samples are accumulated in batch order.
    """
    cdef Py_ssize_t B = X.shape[0], d = X.shape[1], n = X.shape[2]
    cdef Py_ssize_t C = out.shape[0], b, i, j, k, arg
    cdef bint inf_t = isinf(T), attend = (lam != 0.0) or (not use_avg)
    cdef double acc, c, best
    wbuf_ = np.empty(n, dtype=np.float64)
    cdef double[::1] wbuf = wbuf_
    with nogil:
        for b in range(B):
            for i in range(C):
                c = coef[b, i]
                if not attend:
                    for j in range(d):
                        out[i, j] = out[i, j] + c * G[b, j]
                    continue
                if inf_t:
                    arg = 0
                    best = S[b, i, 0]
                    for k in range(1, n):
                        if S[b, i, k] > best:
                            best = S[b, i, k]
                            arg = k
                    for j in range(d):
                        if use_avg:
                            out[i, j] = out[i, j] + c * (G[b, j] + lam * X[b, j, arg])
                        else:
                            out[i, j] = out[i, j] + c * (lam * X[b, j, arg])
                    continue
                for k in range(n):
                    wbuf[k] = A[b, i, k] * (1.0 + T * (S[b, i, k] - R[b, i]))
                for j in range(d):
                    acc = 0.0
                    for k in range(n):
                        acc = acc + wbuf[k] * X[b, j, k]
                    if use_avg:
                        out[i, j] = out[i, j] + c * (G[b, j] + lam * acc)
                    else:
                        out[i, j] = out[i, j] + c * (lam * acc)
