"""Multi-label evaluation metrics.

Labels are 0, 1 or ``IGNORE`` (-1); ignored entries take no part in any
metric, including the Top-k ranking. Score ties are broken by original
index, so every metric is deterministic.
"""

import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DimensionError, UndefinedAPError

IGNORE = -1


def _lsum(values):
    acc = 0.0
    for v in values:
        acc += float(v)
    return acc


def _order(scores):
    # stable sort on negated scores: descending, ties by original index
    return np.argsort(-scores, kind="stable")


def average_precision(scores, labels, interpolation="all"):
    """Average precision of one class.

    ``interpolation="all"`` averages precision at the rank of every positive.
    ``"11point"`` is the VOC2007 variant (max precision at recall >= t for
    t = 0, 0.1, ..., 1). Raises :class:`UndefinedAPError` when no positives
    remain after removing IGNORE entries.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(f"scores {scores.shape} vs labels {labels.shape}")
    keep = labels != IGNORE
    scores, labels = scores[keep], labels[keep]
    hits = labels[_order(scores)] == 1
    npos = int(hits.sum())
    if npos == 0:
        raise UndefinedAPError("class has no positive samples")
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(hits) + 1)
    if interpolation == "all":
        return _lsum(precision[hits]) / npos
    if interpolation == "11point":
        recall = tp / npos
        ap = 0.0
        for t in np.linspace(0.0, 1.0, 11):
            ok = recall >= t - 1e-12
            ap += precision[ok].max() if ok.any() else 0.0
        return float(ap / 11)
    raise ValueError(f"unknown interpolation {interpolation!r}")


def mean_average_precision(scores, labels, interpolation="all"):
    """Return ``(mAP, per_class_ap, n_undefined)``.

    Classes without positives get AP ``nan`` and are left out of the mean.
    """
    scores, labels = _check(scores, labels)
    ap = np.full(scores.shape[1], np.nan)
    for c in range(scores.shape[1]):
        try:
            ap[c] = average_precision(scores[:, c], labels[:, c], interpolation)
        except UndefinedAPError:
            pass
    undefined = int(np.isnan(ap).sum())
    if undefined:
        warnings.warn(f"{undefined} class(es) without positives excluded from mAP",
                      stacklevel=2)
    defined = ap[~np.isnan(ap)]
    mAP = _lsum(defined) / len(defined) if len(defined) else float("nan")
    return mAP, ap, undefined


def _check(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 2 or scores.shape != labels.shape:
        raise DimensionError(f"scores {scores.shape} vs labels {labels.shape}")
    return scores, labels


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class PRF:
    CP: float
    CR: float
    CF1: float
    OP: float
    OR: float
    OF1: float
    no_predictions: bool = False
    empty_precision_classes: int = 0
    empty_recall_classes: int = 0


def predictions(scores, labels, threshold=0.5, topk=None, topk_mode="threshold"):
    """Boolean prediction matrix.

    ``topk_mode="threshold"`` keeps a class only if it passes the threshold
    and is among the sample's ``topk`` best; ``"rank"`` uses the rank alone.
    """
    scores, labels = _check(scores, labels)
    pred = scores >= threshold
    if topk is None:
        return pred
    top = np.zeros_like(pred)
    for s in range(scores.shape[0]):
        valid = np.flatnonzero(labels[s] != IGNORE)
        order = valid[_order(scores[s, valid])][:topk]
        top[s, order] = True
    if topk_mode == "threshold":
        return pred & top
    if topk_mode == "rank":
        return top
    raise ValueError(f"unknown topk_mode {topk_mode!r}")


def thresholded_prf(scores, labels, threshold=0.5, topk=None, topk_mode="threshold"):
    """Per-class (CP, CR, CF1) and overall (OP, OR, OF1) precision/recall/F1."""
    scores, labels = _check(scores, labels)
    pred = predictions(scores, labels, threshold, topk, topk_mode)
    valid = labels != IGNORE
    pos = (labels == 1) & valid
    pred = pred & valid
    tp = (pred & pos).sum(axis=0)
    npred = pred.sum(axis=0)
    npos = pos.sum(axis=0)
    cp = np.where(npred > 0, tp / np.maximum(npred, 1), 0.0)
    cr = np.where(npos > 0, tp / np.maximum(npos, 1), 0.0)
    CP, CR = _lsum(cp) / len(cp), _lsum(cr) / len(cr)
    TP, NP, NT = int(tp.sum()), int(npred.sum()), int(npos.sum())
    OP = TP / NP if NP else 0.0
    OR = TP / NT if NT else 0.0
    return PRF(CP, CR, _f1(CP, CR), OP, OR, _f1(OP, OR),
               no_predictions=NP == 0,
               empty_precision_classes=int((npred == 0).sum()),
               empty_recall_classes=int((npos == 0).sum()))


@dataclass
class MetricsReport:
    mAP: float
    ap: list
    undefined_classes: int
    all: PRF
    top3: PRF
    threshold: float = 0.5
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        d["ap"] = [None if np.isnan(v) else v for v in self.ap]
        return d

    def format_table(self):
        keys = ("CP", "CR", "CF1", "OP", "OR", "OF1")
        head = f"{'':8}{'mAP':>7}" + "".join(f"{k:>7}" for k in keys)
        rows = [head]
        for name, block in (("All", self.all), ("Top-3", self.top3)):
            vals = "".join(f"{100 * getattr(block, k):7.2f}" for k in keys)
            rows.append(f"{name:8}{100 * self.mAP:7.2f}{vals}")
        if self.undefined_classes:
            rows.append(f"({self.undefined_classes} class(es) without positives excluded)")
        return "\n".join(rows)


def evaluate(scores, labels, threshold=0.5, interpolation="all", topk_mode="threshold"):
    """mAP plus the All and Top-3 precision/recall/F1 blocks."""
    scores, labels = _check(scores, labels)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        mAP, ap, undefined = mean_average_precision(scores, labels, interpolation)
    if undefined:
        warnings.warn(f"{undefined} class(es) without positives excluded from mAP",
                      stacklevel=2)
    return MetricsReport(
        mAP=mAP, ap=ap.tolist(), undefined_classes=undefined,
        all=thresholded_prf(scores, labels, threshold),
        top3=thresholded_prf(scores, labels, threshold, topk=3, topk_mode=topk_mode),
        threshold=threshold)
