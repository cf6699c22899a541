"""Numpy implementation of the kernels in ``_kernels.pyx``.

Used when the compiled extension is unavailable. Reductions are written as
explicit loops over the reduced index (vectorized across the others) so the
accumulation order matches the compiled version; numpy's own ``sum``/``mean``
use pairwise summation and would not.
"""

import numpy as np

NAME = "python"


def matvec(M, v):
    acc = np.zeros(M.shape[0])
    for j in range(M.shape[1]):
        acc = acc + M[:, j] * v[j]
    return acc


def row_mean(M):
    acc = np.zeros(M.shape[0])
    for j in range(M.shape[1]):
        acc = acc + M[:, j]
    return acc / M.shape[1]


def row_max(M):
    return M.max(axis=1)


def row_argmax(M):
    # np.argmax returns the first occurrence
    return np.argmax(M, axis=1).astype(np.int64)


def _softmax_last(V, T):
    """Softmax over the last axis; returns ``(probs, argmax)``."""
    arg = np.argmax(V, axis=-1)
    if np.isinf(T):
        out = np.zeros_like(V)
        np.put_along_axis(out, arg[..., None], 1.0, axis=-1)
        return out, arg
    m = np.take_along_axis(V, arg[..., None], axis=-1)
    e = np.exp(T * V - T * m)
    z = np.zeros(V.shape[:-1])
    for k in range(V.shape[-1]):
        z = z + e[..., k]
    return e / z[..., None], arg


def softmax(v, T):
    return _softmax_last(v, T)[0]


def head_forward(W, X, T, lam, use_avg):
    B, d, n = X.shape
    C = W.shape[0]
    acc = np.zeros((B, d))
    for k in range(n):
        acc = acc + X[:, :, k]
    G = acc / n
    S = np.zeros((B, C, n))
    for j in range(d):
        S = S + W[None, :, j, None] * X[:, None, j, :]
    A, arg = _softmax_last(S, T)
    if np.isinf(T):
        R = np.take_along_axis(S, arg[..., None], axis=-1)[..., 0]
    else:
        R = np.zeros((B, C))
        for k in range(n):
            R = R + A[:, :, k] * S[:, :, k]
    if use_avg:
        base = np.zeros((B, C))
        for j in range(d):
            base = base + W[None, :, j] * G[:, j, None]
        Y = base if lam == 0.0 else base + lam * R
    else:
        Y = lam * R
    return Y, S, A, R, G


def head_backward(X, G, S, A, R, T, lam, use_avg, coef, out):
    B, d, n = X.shape
    attend = lam != 0.0 or not use_avg
    if attend:
        if np.isinf(T):
            arg = np.argmax(S, axis=-1)
            # Q[b, i, :] = X[b, :, arg[b, i]]
            Q = np.take_along_axis(X[:, None, :, :], arg[:, :, None, None], axis=-1)[..., 0]
        else:
            w = A * (1.0 + T * (S - R[..., None]))
            Q = np.zeros((B, S.shape[1], d))
            for k in range(n):
                Q = Q + w[:, :, k, None] * X[:, None, :, k]
    for b in range(B):
        c = coef[b][:, None]
        if not attend:
            out += c * G[b][None, :]
        elif use_avg:
            out += c * (G[b][None, :] + lam * Q[b])
        else:
            out += c * (lam * Q[b])
