"""Multi-head CSRA: several classifier/attention branches with fixed temperatures."""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .attention import _lambda, flatten
from .errors import DegenerateClassifierError, DimensionError, ParameterError
from .tensor import INFINITY, as_tensor, check_temperature

CANONICAL_SCHEDULES = {
    1: (1.0,),
    2: (1.0, INFINITY),
    4: (1.0, 2.0, 4.0, INFINITY),
    6: (1.0, 2.0, 3.0, 4.0, 5.0, INFINITY),
    8: (1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, INFINITY),
}

POOLINGS = ("residual", "spatial")


def default_schedule(H):
    """Temperature schedule for ``H`` heads.

    Non-canonical head counts get ``(1, 2, ..., H-1, inf)`` and a warning.
    """
    if int(H) != H or H <= 0:
        raise ParameterError(f"head count must be a positive integer, got {H}")
    H = int(H)
    if H in CANONICAL_SCHEDULES:
        return CANONICAL_SCHEDULES[H]
    warnings.warn(f"non-canonical head count H={H}", stacklevel=2)
    return tuple(float(t) for t in range(1, H)) + (INFINITY,)


def is_canonical(H):
    return H in CANONICAL_SCHEDULES


@dataclass(frozen=True)
class HeadConfig:
    """Shared hyperparameters of a multi-head model.

    ``normalize`` keeps classifier rows on the unit sphere during training.

    ``pooling="spatial"`` drops the average-pooling term (``f^i = a^i``) and
    ignores ``lam``; it exists for ablations.
    """

    H: int = 1
    lam: float = 0.1
    temperatures: tuple = None
    normalize: bool = True
    pooling: str = "residual"

    def __post_init__(self):
        if int(self.H) != self.H or self.H <= 0:
            raise ParameterError(f"head count must be a positive integer, got {self.H}")
        object.__setattr__(self, "H", int(self.H))
        object.__setattr__(self, "lam", _lambda(self.lam))
        if self.temperatures is None:
            temps = default_schedule(self.H)
        else:
            temps = tuple(check_temperature(t) for t in self.temperatures)
            if len(temps) != self.H:
                raise ParameterError(
                    f"{len(temps)} temperatures given for H={self.H} heads")
            if not is_canonical(self.H):
                warnings.warn(f"non-canonical head count H={self.H}", stacklevel=3)
        object.__setattr__(self, "temperatures", temps)
        if self.pooling not in POOLINGS:
            raise ParameterError(f"pooling must be one of {POOLINGS}, got {self.pooling!r}")

    @property
    def use_avg(self):
        return self.pooling == "residual"

    @property
    def head_lambda(self):
        return self.lam if self.use_avg else 1.0


def normalize_rows(W):
    """Divide every classifier row by its L2 norm."""
    W = as_tensor(W, rank=2, name="classifier weights")
    norms = np.sqrt(np.einsum("ij,ij->i", W, W))
    bad = np.flatnonzero(norms < 1e-12)
    if bad.size:
        raise DegenerateClassifierError(f"classifier rows {bad.tolist()} have zero norm")
    return W / norms[:, None]


@dataclass
class MultiHeadModel:
    config: HeadConfig
    heads: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.heads) != self.config.H:
            raise DimensionError(f"{len(self.heads)} heads for H={self.config.H}")
        self.heads = [as_tensor(W, rank=2, name=f"head{h} weights")
                      for h, W in enumerate(self.heads)]
        shapes = {W.shape for W in self.heads}
        if len(shapes) != 1:
            raise DimensionError(f"heads disagree on shape: {sorted(shapes)}")

    @property
    def num_classes(self):
        return self.heads[0].shape[0]

    @property
    def dim(self):
        return self.heads[0].shape[1]

    @classmethod
    def init(cls, config, num_classes, dim, rng):
        """Uniform(-1/sqrt(d), 1/sqrt(d)) rows per head, drawn in head order."""
        bound = 1.0 / math.sqrt(dim)
        heads = [rng.uniform(-bound, bound, size=(num_classes, dim)) for _ in range(config.H)]
        if config.normalize:
            heads = [normalize_rows(W) for W in heads]
        return cls(config, heads)

    def forward_batch(self, X):
        """Per-head kernel outputs for flattened features ``X`` of shape (B, d, n).

        Returns ``(logits, cache)`` where ``cache`` holds each head's
        intermediates for the backward pass.
        """
        if X.shape[1] != self.dim:
            raise DimensionError(f"features have d={X.shape[1]}, model expects d={self.dim}")
        k = _backend.kernels
        cfg = self.config
        total = None
        cache = []
        for W, T in zip(self.heads, cfg.temperatures):
            out = k.head_forward(W, X, T, cfg.head_lambda, cfg.use_avg)
            cache.append(out)
            total = out[0] if total is None else total + out[0]
        return total, cache


def multihead_logits(x, model):
    """Sum of per-head CSRA logits, in head order."""
    X = flatten(x)
    return model.forward_batch(X[None])[0][0]
