"""Training a multi-head CSRA classifier on precomputed feature tensors.

Loss is binary cross-entropy averaged over classes and then over the batch.
The gradient of one head's logit with respect to its classifier row is::

    dy_i/dm_i = g + lam * sum_k s_k (1 + T (S_k - r)) x_k,    r = sum_k s_k S_k

because ``m_i`` enters both the scores and the softmax weights. At
``T = inf`` the sum collapses to ``x_k*`` at the (first) argmax location.

The optimizer is SGD with momentum and weight decay in the usual
``v <- mu v + (grad + wd w); w <- w - lr v`` form. The learning rate ramps
linearly over the warmup steps (step ``t`` uses ``lr * (t+1) / warmup``) and
is constant afterwards.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .attention import _lambda, flatten
from .errors import DimensionError, DivergenceError, ParameterError
from .multihead import HeadConfig, MultiHeadModel, normalize_rows

log = logging.getLogger(__name__)

IGNORE = -1
LR_SCHEDULE = "linear-warmup-then-constant"


@dataclass
class LabeledFeatureSet:
    """Feature tensors ``(d, h, w)`` with labels in {0, 1, IGNORE}.

    Spatial size may differ between samples; ``d`` and ``C`` may not.
    """

    features: list
    labels: np.ndarray
    ids: list = None

    def __post_init__(self):
        self.features = [np.ascontiguousarray(x, dtype=np.float64) for x in self.features]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.labels.ndim != 2 or len(self.features) != self.labels.shape[0]:
            raise DimensionError(
                f"{len(self.features)} feature tensors vs labels of shape {self.labels.shape}")
        if not np.isin(self.labels, (0, 1, IGNORE)).all():
            raise ParameterError("labels must be 0, 1 or -1 (IGNORE)")
        for x in self.features:
            if x.ndim != 3:
                raise DimensionError(f"feature tensor must be (d, h, w), got {x.shape}")
        dims = {x.shape[0] for x in self.features}
        if len(dims) > 1:
            raise DimensionError(f"feature tensors disagree on channel count: {sorted(dims)}")
        if self.ids is None:
            self.ids = [str(i) for i in range(len(self.features))]
        self._stacked = None

    @classmethod
    def from_array(cls, X, labels, ids=None):
        """Build from a ``(N, d, h, w)`` array."""
        return cls(list(np.asarray(X, dtype=np.float64)), labels, ids)

    def __len__(self):
        return len(self.features)

    @property
    def num_classes(self):
        return self.labels.shape[1]

    @property
    def dim(self):
        return self.features[0].shape[0]

    def stacked(self):
        """``(N, d, n)`` array when all samples share a spatial size, else None."""
        if self._stacked is None:
            sizes = {x.shape[1:] for x in self.features}
            if len(sizes) == 1:
                self._stacked = np.stack([flatten(x) for x in self.features])
            else:
                self._stacked = False
        return self._stacked if self._stacked is not False else None

    def targets(self):
        """Training targets: IGNORE counts as negative."""
        return np.where(self.labels == IGNORE, 0, self.labels).astype(np.float64)


@dataclass
class TrainConfig:
    epochs: int = 10
    batch_size: int = 16
    lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 1e-4
    warmup_epochs: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ParameterError("epochs and batch_size must be >= 1")
        for name in ("lr", "momentum", "weight_decay", "warmup_epochs"):
            if not getattr(self, name) >= 0:
                raise ParameterError(f"{name} must be >= 0")


@dataclass
class LossReport:
    epoch_loss: list = field(default_factory=list)
    val_map: list = field(default_factory=list)
    steps: int = 0
    lr_schedule: str = LR_SCHEDULE

    def to_dict(self):
        return {"epoch_loss": self.epoch_loss, "val_map": self.val_map,
                "steps": self.steps, "lr_schedule": self.lr_schedule}


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _bce_terms(logits, targets):
    return np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))


def bce_loss(logits, labels):
    """Mean over classes of the numerically stable binary cross-entropy."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if logits.shape != labels.shape or logits.ndim != 1:
        raise DimensionError(f"bce_loss length mismatch: {logits.shape} vs {labels.shape}")
    return float(_bce_terms(logits, labels).mean())


def _accumulate(model, cache, X, coef, grads):
    cfg = model.config
    for h, (T, out) in enumerate(zip(cfg.temperatures, cache)):
        _, S, A, R, G = out
        _backend.kernels.head_backward(X, G, S, A, R, T, cfg.head_lambda, cfg.use_avg,
                                       coef, grads[h])


def loss_grad(x, model, labels):
    """Gradient of the single-sample loss with respect to every head's weights.

    Returns a list of ``(C, d)`` arrays in head order. IGNORE labels count as 0.
    """
    X = flatten(x)[None]
    labels = np.asarray(labels)
    if labels.shape != (model.num_classes,):
        raise DimensionError(f"labels {labels.shape} vs {model.num_classes} classes")
    t = np.where(labels == IGNORE, 0, labels).astype(np.float64)[None]
    logits, cache = model.forward_batch(X)
    coef = (sigmoid(logits) - t) / model.num_classes
    grads = [np.zeros_like(W) for W in model.heads]
    _accumulate(model, cache, X, coef, grads)
    return grads


def _batch_step(model, data, idx, targets):
    """Loss sum and mean gradient over the samples ``idx`` (in that order)."""
    C = model.num_classes
    grads = [np.zeros_like(W) for W in model.heads]
    stacked = data.stacked()
    if stacked is not None:
        chunks = [(stacked[idx], targets[idx])]
    else:
        chunks = [(flatten(data.features[b])[None], targets[b:b + 1]) for b in idx]
    loss_sum = 0.0
    for X, t in chunks:
        logits, cache = model.forward_batch(X)
        per_sample = _bce_terms(logits, t).mean(axis=1)
        for v in per_sample:
            loss_sum += v
        coef = (sigmoid(logits) - t) / C
        _accumulate(model, cache, X, coef, grads)
    for g in grads:
        g /= len(idx)
    return loss_sum, grads


def predict_logits(model, features, chunk=256):
    """Logits ``(N, C)`` for a list of ``(d, h, w)`` tensors or an (N, d, h, w) array."""
    features = list(features)
    out = np.empty((len(features), model.num_classes))
    shapes = {np.shape(x) for x in features}
    if len(shapes) == 1:
        X = np.stack([flatten(x) for x in features])
        for s in range(0, len(features), chunk):
            out[s:s + chunk] = model.forward_batch(X[s:s + chunk])[0]
    else:
        for i, x in enumerate(features):
            out[i] = model.forward_batch(flatten(x)[None])[0][0]
    return out


def sgd_update(W, grad, velocity, lr, momentum, weight_decay):
    """One in-place SGD step; returns the new weights."""
    d = grad + weight_decay * W
    velocity *= momentum
    velocity += d
    return W - lr * velocity


def train(data, head_cfg, train_cfg, val=None):
    """Fit a :class:`MultiHeadModel`; returns ``(model, LossReport)``.

    ``val`` is an optional held-out :class:`LabeledFeatureSet`; its mAP is
    recorded after every epoch.
    """
    from .metrics import mean_average_precision

    if not isinstance(head_cfg, HeadConfig):
        raise ParameterError("head_cfg must be a HeadConfig")
    if len(data) == 0:
        raise ParameterError("training set is empty")
    _lambda(head_cfg.lam)
    rng = np.random.default_rng(train_cfg.seed)
    model = MultiHeadModel.init(head_cfg, data.num_classes, data.dim, rng)
    velocity = [np.zeros_like(W) for W in model.heads]
    targets = data.targets()
    N, B = len(data), train_cfg.batch_size
    steps_per_epoch = math.ceil(N / B)
    warmup = int(round(train_cfg.warmup_epochs * steps_per_epoch))
    report = LossReport()
    step = 0
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(N)
        epoch_loss = 0.0
        for batch, start in enumerate(range(0, N, B)):
            idx = order[start:start + B]
            lr = train_cfg.lr * (step + 1) / warmup if step < warmup else train_cfg.lr
            loss_sum, grads = _batch_step(model, data, idx, targets)
            if not math.isfinite(loss_sum) or not all(np.isfinite(g).all() for g in grads):
                raise DivergenceError(epoch, batch)
            epoch_loss += loss_sum
            heads = []
            for W, g, v in zip(model.heads, grads, velocity):
                W = sgd_update(W, g, v, lr, train_cfg.momentum, train_cfg.weight_decay)
                heads.append(normalize_rows(W) if head_cfg.normalize else W)
            model.heads = heads
            step += 1
        report.epoch_loss.append(float(epoch_loss / N))
        if val is not None:
            scores = sigmoid(predict_logits(model, val.features))
            report.val_map.append(float(mean_average_precision(scores, val.labels)[0]))
        log.debug("epoch %d loss %.6f", epoch, report.epoch_loss[-1])
    report.steps = step
    return model, report
