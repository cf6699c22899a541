"""Class-specific residual attention for a single image.

A feature tensor ``x`` has shape ``(d, h, w)``. Its ``n = h * w`` spatial
locations are flattened row-major (h outer, w inner), so location ``k``
corresponds to ``(k // w, k % w)``; the heatmap exporter relies on this.
Classifier weights ``W`` have shape ``(C, d)`` with row ``i`` the classifier
of class ``i``.
"""

import numpy as np

from . import _backend
from .errors import DimensionError, ParameterError
from .tensor import INFINITY, as_tensor, check_temperature, matvec, reduce, softmax_t

__all__ = [
    "INFINITY",
    "attention_scores",
    "class_feature",
    "csra_feature",
    "csra_logits",
    "csra_logits_features",
    "flatten",
    "fused_weights",
    "gap_logits",
    "global_feature",
    "max_limit_logits",
    "raw_scores",
    "spatial_logits",
]


def flatten(x):
    """Return the ``(d, n)`` location matrix of a ``(d, h, w)`` feature tensor."""
    x = as_tensor(x, rank=3, name="feature tensor")
    return x.reshape(x.shape[0], -1)


def _weights(W, d=None):
    W = as_tensor(W, rank=2, name="classifier weights")
    if d is not None and W.shape[1] != d:
        raise DimensionError(
            f"classifier weights {W.shape} do not match feature channels d={d}")
    return W


def _lambda(lam):
    lam = float(lam)
    if not lam >= 0 or lam == INFINITY:
        raise ParameterError(f"lambda must be finite and >= 0, got {lam}")
    return lam


def _class_index(i, C):
    if not 0 <= i < C:
        raise IndexError(f"class index {i} out of range for {C} classes")


def raw_scores(x, W):
    """Per-class, per-location scores ``S[i, k] = x_k . m_i``, shape ``(C, n)``."""
    X = flatten(x)
    W = _weights(W, X.shape[0])
    S = np.empty((W.shape[0], X.shape[1]))
    for k in range(X.shape[1]):
        S[:, k] = matvec(W, np.ascontiguousarray(X[:, k]))
    return S


def attention_scores(S, T):
    """Row-wise temperature softmax of a score tensor: ``s_k^i`` for every class."""
    S = as_tensor(S, rank=2, name="score tensor")
    T = check_temperature(T)
    return np.stack([softmax_t(row, T) for row in S])


def class_feature(x, A, i):
    """Attention-weighted feature ``a^i = sum_k s_k^i x_k`` for class ``i``."""
    X = flatten(x)
    A = as_tensor(A, rank=2, name="attention map")
    if A.shape[1] != X.shape[1]:
        raise DimensionError(f"attention map {A.shape} has {A.shape[1]} locations, "
                             f"features {X.shape} have {X.shape[1]}")
    _class_index(i, A.shape[0])
    acc = np.zeros(X.shape[0])
    for k in range(X.shape[1]):
        acc = acc + A[i, k] * X[:, k]
    return acc


def global_feature(x):
    """Class-agnostic average-pooled feature ``g``."""
    X = flatten(x)
    return reduce(X, axis=1, kind="mean")


def csra_feature(g, a_i, lam):
    """Residual fusion ``f^i = g + lam * a^i``."""
    g = as_tensor(g, rank=1, name="global feature")
    a_i = as_tensor(a_i, rank=1, name="class feature")
    if g.shape != a_i.shape:
        raise DimensionError(f"csra_feature length mismatch: {g.shape} vs {a_i.shape}")
    return g + _lambda(lam) * a_i


def gap_logits(x, W):
    """Plain average-pooling logits ``m_i . g``."""
    g = global_feature(x)
    return matvec(_weights(W, g.shape[0]), g)


def _forward(x, W, T, lam, use_avg):
    X = flatten(x)
    W = _weights(W, X.shape[0])
    Y = _backend.kernels.head_forward(W, X[None], check_temperature(T), lam, use_avg)[0]
    return Y[0]


def csra_logits(x, W, T, lam):
    """CSRA logits through the score tensor (never builds ``a^i``).

    ``y_i = m_i . g + lam * sum_k s_k^i S[i, k]``. With ``lam == 0`` the
    attention term is skipped, so the result is bit-identical to
    :func:`gap_logits`.
    """
    return _forward(x, W, T, _lambda(lam), True)


def spatial_logits(x, W, T):
    """Logits using the class-specific feature alone (``f^i = a^i``)."""
    return _forward(x, W, T, 1.0, False)


def csra_logits_features(x, W, T, lam):
    """CSRA logits through explicit features ``m_i . (g + lam * a^i)``.

    Slower reference path; agrees with :func:`csra_logits` to rounding.
    """
    lam = _lambda(lam)
    W = _weights(W, flatten(x).shape[0])
    A = attention_scores(raw_scores(x, W), T)
    g = global_feature(x)
    out = np.empty(W.shape[0])
    for i in range(W.shape[0]):
        f = csra_feature(g, class_feature(x, A, i), lam)
        out[i] = matvec(W[i:i + 1], f)[0]
    return out


def max_limit_logits(S, lam):
    """Hard-max limit: per-class mean plus ``lam`` times max over locations."""
    S = as_tensor(S, rank=2, name="score tensor")
    lam = _lambda(lam)
    mean = reduce(S, axis=1, kind="mean")
    if lam == 0.0:
        return mean
    return mean + lam * reduce(S, axis=1, kind="max")


def fused_weights(A, lam, i):
    """Normalized per-location weights ``(1/n + lam * s_k^i) / (1 + lam)``."""
    A = as_tensor(A, rank=2, name="attention map")
    lam = _lambda(lam)
    _class_index(i, A.shape[0])
    n = A.shape[1]
    return (1.0 / n + lam * A[i]) / (1.0 + lam)
