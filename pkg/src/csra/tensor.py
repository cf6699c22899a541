"""Dense float64 primitives used by the attention math.

Arrays are plain C-contiguous ``numpy.ndarray`` of dtype float64. All
reductions accumulate left to right, so results are reproducible bit for bit
(see :mod:`csra._backend` for the two interchangeable implementations).
"""

import math

import numpy as np

from . import _backend
from .errors import DimensionError, ParameterError

INFINITY = math.inf
"""Temperature sentinel for the hard-max limit of the softmax."""

MAX_RANK = 4


def as_tensor(a, rank=None, name="tensor", allow_inf=False):
    """Validate ``a`` and return it as a C-contiguous float64 array.

    Checks rank (1 to 4, or exactly ``rank``), that every extent is at least
    one, and that all values are finite.
    """
    arr = np.asarray(a, dtype=np.float64)
    if rank is not None and arr.ndim != rank:
        raise DimensionError(f"{name} must have rank {rank}, got shape {arr.shape}")
    if not 1 <= arr.ndim <= MAX_RANK:
        raise DimensionError(f"{name} rank must be 1..{MAX_RANK}, got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise DimensionError(f"{name} has an empty extent: shape {arr.shape}")
    bad = np.isnan(arr) if allow_inf else ~np.isfinite(arr)
    if bad.any():
        raise ParameterError(f"{name} contains non-finite values")
    return np.ascontiguousarray(arr)


def check_temperature(T):
    T = float(T)
    if math.isnan(T) or T <= 0 or T == -math.inf:
        raise ParameterError(f"temperature must be positive or INFINITY, got {T}")
    return T


def matvec(M, v):
    """Return ``M @ v`` with each dot product summed left to right."""
    M = as_tensor(M, rank=2, name="matrix")
    v = as_tensor(v, rank=1, name="vector")
    if M.shape[1] != v.shape[0]:
        raise DimensionError(f"matvec shape mismatch: matrix {M.shape} vs vector {v.shape}")
    return _backend.kernels.matvec(M, v)


def softmax_t(v, T):
    """Temperature softmax ``exp(T*v - T*max v) / sum``.

    ``T == INFINITY`` gives the one-hot vector at the first maximum.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"softmax_t needs a nonempty vector, got shape {v.shape}")
    v = as_tensor(v, rank=1, name="vector")
    return _backend.kernels.softmax(v, check_temperature(T))


_REDUCERS = ("mean", "max", "argmax")


def reduce(M, axis, kind):
    """Reduce a matrix along ``axis`` (numpy convention: 1 reduces each row).

    ``kind`` is ``"mean"``, ``"max"`` or ``"argmax"``; ties go to the lowest
    index. ``argmax`` returns an int64 array.
    """
    M = as_tensor(M, rank=2, name="matrix")
    if axis not in (0, 1, -1, -2):
        raise DimensionError(f"invalid axis {axis!r} for matrix of shape {M.shape}")
    if kind not in _REDUCERS:
        raise ParameterError(f"unknown reduction {kind!r}; expected one of {_REDUCERS}")
    if axis in (0, -2):
        M = np.ascontiguousarray(M.T)
    k = _backend.kernels
    if kind == "mean":
        return k.row_mean(M)
    if kind == "max":
        return k.row_max(M)
    return k.row_argmax(M)
