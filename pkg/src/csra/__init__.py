"""Class-specific residual attention (CSRA) heads for multi-label recognition."""

from . import _backend
from .attention import (
    attention_scores,
    class_feature,
    csra_feature,
    csra_logits,
    csra_logits_features,
    fused_weights,
    gap_logits,
    global_feature,
    max_limit_logits,
    raw_scores,
    spatial_logits,
)
from .errors import (
    CSRAError,
    DegenerateClassifierError,
    DimensionError,
    DivergenceError,
    FormatError,
    ParameterError,
    UndefinedAPError,
)
from .metrics import (
    MetricsReport,
    average_precision,
    evaluate,
    mean_average_precision,
    thresholded_prf,
)
from .multihead import HeadConfig, MultiHeadModel, default_schedule, multihead_logits, normalize_rows
from .tensor import INFINITY, matvec, reduce, softmax_t
from .training import (
    IGNORE,
    LabeledFeatureSet,
    LossReport,
    TrainConfig,
    bce_loss,
    loss_grad,
    predict_logits,
    sigmoid,
    train,
)

__version__ = "0.1.0"


def backend():
    """Name of the active kernel backend (``"compiled"`` or ``"python"``)."""
    return _backend.current()
