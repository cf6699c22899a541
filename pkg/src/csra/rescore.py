"""Training-free rescoring of existing score tensors: ``mean + lam * max``."""

import numpy as np

from .attention import max_limit_logits
from .errors import ParameterError
from .metrics import evaluate, mean_average_precision
from .training import sigmoid

FAMILY_LAMBDA = {"resnet": 0.02, "other": 0.2}


def resolve_lambda(lam=None, family=None):
    """Explicit ``lam`` wins; otherwise the fixed default of the model family."""
    if lam is not None:
        return float(lam)
    if family is None:
        raise ParameterError("rescoring needs a lambda or a model family (resnet/other)")
    try:
        return FAMILY_LAMBDA[family]
    except KeyError:
        raise ParameterError(
            f"unknown family {family!r}; expected one of {sorted(FAMILY_LAMBDA)}") from None


def rescore(score_tensors, lam):
    """Fused logits ``(N, C)`` for per-sample score tensors of shape (C, n) or (C, h, w)."""
    rows = []
    for S in score_tensors:
        S = np.asarray(S, dtype=np.float64)
        rows.append(max_limit_logits(S.reshape(S.shape[0], -1), lam))
    return np.stack(rows)


def lambda_sweep(score_tensors, labels, lambdas):
    """``[(lam, mAP), ...]`` for each ``lam`` in order."""
    out = []
    for lam in lambdas:
        mAP = mean_average_precision(rescore(score_tensors, lam), labels)[0]
        out.append((float(lam), mAP))
    return out


def rescore_report(score_tensors, labels, lam, threshold=0.5, lambdas=None):
    """Metrics of the rescored logits (thresholded on their sigmoid) and an optional sweep."""
    logits = rescore(score_tensors, lam)
    report = evaluate(sigmoid(logits), labels, threshold=threshold)
    report.extra["lambda"] = lam
    if lambdas:
        report.extra["sweep"] = [{"lambda": l, "mAP": m}
                                 for l, m in lambda_sweep(score_tensors, labels, lambdas)]
    return logits, report


def is_unimodal(values):
    """True if ``values`` rises (weakly) to a peak and then falls (weakly)."""
    values = list(values)
    peak = int(np.argmax(values))
    up = all(a <= b for a, b in zip(values[:peak], values[1:peak + 1]))
    down = all(a >= b for a, b in zip(values[peak:], values[peak + 1:]))
    return up and down
