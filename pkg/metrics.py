"""Confusion-matrix metrics, ROC area and PRC area (average precision)."""
import logging
from dataclasses import dataclass, field, fields
from typing import Optional, Tuple

import numpy as np

from errors import LengthMismatch, NoPositives, SingleClass

logger = logging.getLogger(__name__)

# metrics averaged into the summary row, in table order
SUMMARY_METRICS = ('sensitivity', 'specificity', 'f_measure', 'accuracy', 'roc_area', 'prc_area')


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self):
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricVector:
    accuracy: float
    sensitivity: float
    specificity: float
    precision: float
    f_measure: float
    roc_area: Optional[float] = None
    prc_area: Optional[float] = None
    # names of metrics whose denominator was zero (reported as 0)
    flags: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def average(self):
        values = [getattr(self, m) for m in SUMMARY_METRICS if getattr(self, m) is not None]
        return float(np.mean(values)) if values else 0.0

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d['flags'] = list(self.flags)
        d['average'] = self.average
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**{f.name: (tuple(d[f.name]) if f.name == 'flags' else d.get(f.name))
                      for f in fields(cls) if f.name in d})


def _binary(values, name):
    arr = np.asarray(values)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    return arr.astype(np.int64)


def confusion(predictions, labels):
    p = _binary(predictions, 'predictions')
    y = _binary(labels, 'labels')
    if len(p) != len(y):
        raise LengthMismatch(f"{len(p)} predictions for {len(y)} labels")
    return ConfusionCounts(tp=int(np.sum((p == 1) & (y == 1))), tn=int(np.sum((p == 0) & (y == 0))),
                           fp=int(np.sum((p == 1) & (y == 0))), fn=int(np.sum((p == 0) & (y == 1))))


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def compute_metrics(counts):
    """Scalar metrics from confusion counts; a 0/0 metric is reported as 0 and flagged.

    F is computed as 2TP / (2TP + FP + FN), the same value as 2PR / (P + R)
    whenever both are defined.
    """
    flags = []
    c = counts
    accuracy = _ratio(c.tp + c.tn, c.total, 'accuracy', flags)
    sensitivity = _ratio(c.tp, c.tp + c.fn, 'sensitivity', flags)
    specificity = _ratio(c.tn, c.tn + c.fp, 'specificity', flags)
    precision = _ratio(c.tp, c.tp + c.fp, 'precision', flags)
    if c.tp == 0:
        flags.append('f_measure')
        f_measure = 0.0
    else:
        f_measure = 2 * c.tp / (2 * c.tp + c.fp + c.fn)
    return MetricVector(accuracy, sensitivity, specificity, precision, f_measure, flags=tuple(flags))


def _threshold_counts(scores, labels):
    """Cumulative (tp, fp) at each distinct score, highest score first."""
    s = np.asarray(scores, dtype=np.float64)
    y = _binary(labels, 'labels')
    if len(s) != len(y):
        raise LengthMismatch(f"{len(s)} scores for {len(y)} labels")
    order = np.argsort(-s, kind='mergesort')
    s, y = s[order], y[order]
    tp = np.cumsum(y == 1)
    fp = np.cumsum(y == 0)
    # last position of every run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    return tp[last].astype(np.int64), fp[last].astype(np.int64)


def roc_auc(scores, labels):
    """Trapezoidal area under the ROC threshold sweep (the Mann-Whitney statistic, ties count 1/2)."""
    tp, fp = _threshold_counts(scores, labels)
    n_pos, n_neg = (int(tp[-1]), int(fp[-1])) if len(tp) else (0, 0)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass('ROC area needs both classes')
    tp = np.r_[0, tp]
    fp = np.r_[0, fp]
    twice_area = int(np.sum(np.diff(fp) * (tp[1:] + tp[:-1])))
    return twice_area / (2 * n_pos * n_neg)


def prc_area(scores, labels):
    """Average precision: sum over thresholds of (R_k - R_k-1) * P_k."""
    tp, fp = _threshold_counts(scores, labels)
    n_pos = int(tp[-1]) if len(tp) else 0
    if n_pos == 0:
        raise NoPositives('PRC area needs at least one positive')
    recall_step = np.diff(np.r_[0, tp]) / n_pos
    precision = tp / (tp + fp)
    return float(np.sum(recall_step * precision))


def evaluate_predictions(predictions, scores, labels):
    """Full metric vector; curve areas are left empty (and flagged) when undefined."""
    mv = compute_metrics(confusion(predictions, labels))
    flags = list(mv.flags)
    try:
        roc = roc_auc(scores, labels)
    except SingleClass:
        roc = None
        flags.append('roc_area')
    try:
        prc = prc_area(scores, labels)
    except NoPositives:
        prc = None
        flags.append('prc_area')
    return MetricVector(mv.accuracy, mv.sensitivity, mv.specificity, mv.precision, mv.f_measure,
                        roc, prc, tuple(flags))


def aggregate_metrics(vectors):
    """Per-metric mean over folds; curve areas average over the folds that have them."""
    vectors = list(vectors)
    if not vectors:
        raise ValueError('no metric vectors to aggregate')
    out = {}
    for name in ('accuracy', 'sensitivity', 'specificity', 'precision', 'f_measure', 'roc_area', 'prc_area'):
        values = [getattr(v, name) for v in vectors if getattr(v, name) is not None]
        out[name] = float(np.mean(values)) if values else None
    flags = sorted({f for v in vectors for f in v.flags})
    return MetricVector(flags=tuple(flags), **out)
