"""Synthetic multi-label feature tensors with spatially localized class evidence.

Every class owns a random signature direction. A sample is Gaussian background
noise around a constant ``offset`` on an ``h x w`` grid; each present class
adds its signature to a few random cells. The offset plays the role of the
positive mean of real (post-ReLU) backbone features and acts as the bias the
bias-free classifier otherwise lacks. Average pooling dilutes that evidence by the grid size, which
is where class-specific spatial attention pays off.
"""

from dataclasses import dataclass

import numpy as np

from .training import LabeledFeatureSet


@dataclass(frozen=True)
class SyntheticSpec:
    d: int = 16
    h: int = 7
    w: int = 7
    num_classes: int = 6
    min_cells: int = 1
    max_cells: int = 3
    p_present: float = 0.3
    amplitude: float = 3.0
    noise: float = 1.0
    offset: float = 1.0


def signatures(spec, rng):
    """Unit-norm class signature vectors scaled by ``spec.amplitude``, shape (C, d)."""
    U = rng.standard_normal((spec.num_classes, spec.d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    return spec.amplitude * U


def generate(n_samples, spec=SyntheticSpec(), seed=0):
    """Return ``(X, labels, U)``: features (N, d, h, w), labels (N, C), signatures."""
    rng = np.random.default_rng(seed)
    U = signatures(spec, rng)
    n = spec.h * spec.w
    X = spec.offset + spec.noise * rng.standard_normal((n_samples, spec.d, n))
    labels = (rng.random((n_samples, spec.num_classes)) < spec.p_present).astype(np.int64)
    for s in range(n_samples):
        for c in np.flatnonzero(labels[s]):
            k = rng.integers(spec.min_cells, spec.max_cells + 1)
            cells = rng.choice(n, size=k, replace=False)
            X[s][:, cells] += U[c][:, None]
    return X.reshape(n_samples, spec.d, spec.h, spec.w), labels, U


def split(n_train, n_test, spec=SyntheticSpec(), seed=0):
    """Train and held-out :class:`LabeledFeatureSet` drawn from one generator run."""
    X, labels, _ = generate(n_train + n_test, spec, seed)
    train = LabeledFeatureSet.from_array(X[:n_train], labels[:n_train])
    test = LabeledFeatureSet.from_array(X[n_train:], labels[n_train:])
    return train, test
