"""Pareto filtering of (window, metrics) solutions and hypervolume ranking of algorithms.

All metrics are maximized; the reference point defaults to the origin of [0, 1]^m
and the reference-set hypervolume to 0, so the hypervolume difference of an
algorithm is minus its hypervolume and smaller is better.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

import util
from errors import DimensionMismatch, EmptyInput, PointBelowReference

logger = logging.getLogger(__name__)

SELECTION_METRICS = ('f_measure', 'specificity', 'sensitivity', 'accuracy')
SELECTION_METRICS_6 = SELECTION_METRICS + ('roc_area', 'prc_area')
METRIC_TITLES = {'f_measure': 'F-Measure', 'specificity': 'Specificity', 'sensitivity': 'Sensitivity',
                 'accuracy': 'Accuracy', 'roc_area': 'ROC Area', 'prc_area': 'PRC Area',
                 'precision': 'Precision'}


@dataclass(frozen=True)
class Solution:
    algorithm: str
    window: str
    metrics: Tuple[float, ...]

    def __post_init__(self):
        for v in self.metrics:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"metric {v} of {self.algorithm} {self.window} is outside [0, 1]")

    def volume(self, reference=None):
        ref = np.zeros(len(self.metrics)) if reference is None else np.asarray(reference)
        return float(np.prod(np.asarray(self.metrics) - ref))


def _vector(x):
    return np.asarray(x.metrics if isinstance(x, Solution) else x, dtype=np.float64)


def dominates(a, b):
    """True iff a >= b in every component and a > b in at least one."""
    fa, fb = _vector(a), _vector(b)
    if fa.shape != fb.shape:
        raise DimensionMismatch(f"cannot compare {fa.shape[0]}-d and {fb.shape[0]}-d solutions")
    return bool(np.all(fa >= fb) and np.any(fa > fb))


def _dominated_mask(F):
    """mask[i] is True when some row of F dominates row i."""
    ge = np.all(F[:, None, :] >= F[None, :, :], axis=2)
    gt = np.any(F[:, None, :] > F[None, :, :], axis=2)
    # [j, i]: j dominates i
    return np.any(ge & gt, axis=0)


def pareto_front(solutions):
    """Solutions not dominated by any other; duplicates of a front member are all kept."""
    solutions = list(solutions)
    if not solutions:
        return []
    F = np.stack([_vector(s) for s in solutions])
    dominated = _dominated_mask(F)
    return [s for s, d in zip(solutions, dominated) if not d]


def _points(front, reference):
    P = np.stack([_vector(s) for s in front]) if len(front) else np.empty((0, 0))
    if len(front) == 0:
        return P, None
    ref = np.zeros(P.shape[1]) if reference is None else np.asarray(reference, dtype=np.float64)
    if ref.shape != (P.shape[1],):
        raise DimensionMismatch(f"reference has {ref.shape[0]} components, points have {P.shape[1]}")
    if np.any(P < ref):
        raise PointBelowReference('every point must be >= the reference point in all components')
    return P - ref, ref


def _hso(P):
    """Hypervolume of the union of boxes [0, p] by slicing on the last objective."""
    n, m = P.shape
    if n == 0:
        return 0.0
    if m == 1:
        return float(P[:, 0].max())
    if m == 2:
        order = np.lexsort((-P[:, 1], -P[:, 0]))
        area, top = 0.0, 0.0
        for x, y in P[order]:
            if y > top:
                area += x * (y - top)
                top = y
        return area
    order = np.argsort(-P[:, -1], kind='mergesort')
    P = P[order]
    volume = 0.0
    for k in range(n):
        depth = P[k, -1] - (P[k + 1, -1] if k + 1 < n else 0.0)
        if depth <= 0:
            continue
        slab = P[:k + 1, :-1]
        slab = slab[~_dominated_mask(slab)]
        volume += depth * _hso(slab)
    return volume


def hypervolume(front, reference=None):
    """Exact measure of the union of boxes spanned from the reference point to each point."""
    P, _ = _points(list(front), reference)
    if len(P) == 0:
        return 0.0
    P = P[~_dominated_mask(P)]
    return float(_hso(np.unique(P, axis=0)))


def box_volume_sum(front, reference=None):
    """Sum of the individual box volumes (overlaps counted repeatedly)."""
    P, _ = _points(list(front), reference)
    return float(np.prod(P, axis=1).sum()) if len(P) else 0.0


def hypervolume_monte_carlo(front, n_samples=100000, seed=0, reference=None, upper=1.0, chunk=20000):
    """(estimate, standard error) from uniform samples in the box [reference, upper]^m."""
    P, ref = _points(list(front), reference)
    if len(P) == 0:
        return 0.0, 0.0
    P = P + ref
    hi = np.broadcast_to(np.asarray(upper, dtype=np.float64), ref.shape)
    box = float(np.prod(hi - ref))
    rng = util.rng_for(seed, 'hypervolume')
    hits = 0
    done = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        S = ref + rng.random((size, len(ref))) * (hi - ref)
        hits += int(np.any(np.all(P[None, :, :] >= S[:, None, :], axis=2), axis=1).sum())
        done += size
    frac = hits / n_samples
    return box * frac, box * float(np.sqrt(frac * (1 - frac) / n_samples))


def retained_algorithms(best_f1, tolerance=0.10):
    """Algorithms whose best F-measure is within `tolerance` (relative) of the best one."""
    if not best_f1:
        return []
    top = max(best_f1.values())
    return sorted(name for name, f in best_f1.items() if f >= top * (1 - tolerance))


@dataclass
class AlgorithmEntry:
    algorithm: str
    front: List[Solution] = field(default_factory=list)
    hypervolume: Optional[float] = None
    difference: Optional[float] = None
    implemented: bool = True

    def to_dict(self, metric_names):
        return {'algorithm': self.algorithm, 'implemented': self.implemented,
                'hypervolume': self.hypervolume, 'hypervolume_difference': self.difference,
                'front': [dict(window=s.window, **dict(zip(metric_names, s.metrics))) for s in self.front]}


@dataclass
class HypervolumeReport:
    entries: List[AlgorithmEntry]
    metric_names: Tuple[str, ...] = SELECTION_METRICS
    reference_volume: float = 0.0
    mode: str = 'union'

    @property
    def ranking(self):
        return [e.algorithm for e in self.entries if e.implemented]

    def to_dict(self):
        return {'mode': self.mode, 'reference_volume': self.reference_volume,
                'metrics': list(self.metric_names), 'ranking': self.ranking,
                'algorithms': [e.to_dict(self.metric_names) for e in self.entries]}

    def render(self):
        """Ranking table followed by one non-dominated table per algorithm."""
        rows = [{'Algorithm': e.algorithm,
                 'Hypervolume': f"{e.difference:.4f}" if e.implemented else 'not implemented'}
                for e in self.entries]
        parts = [pd.DataFrame(rows).to_string(index=False)]
        for e in self.entries:
            if not e.implemented:
                continue
            table = pd.DataFrame([dict(Window=s.window, **{METRIC_TITLES.get(n, n): f"{v:.4f}"
                                                            for n, v in zip(self.metric_names, s.metrics)})
                                  for s in e.front])
            parts.append(f"{e.algorithm}: non-dominated solutions\n{table.to_string(index=False)}")
        return '\n\n'.join(parts) + '\n'


def rank_algorithms(per_algorithm_solutions, reference_volume=0.0, mode='union', reference=None,
                    metric_names=SELECTION_METRICS, include_discarded=()):
    """Front, hypervolume and hypervolume difference per algorithm, best (smallest difference) first.

    mode 'union' measures the union of boxes; 'box_sum' adds the box volumes up.
    Names in `include_discarded` are appended as not-implemented rows.
    """
    if not per_algorithm_solutions:
        raise EmptyInput('no algorithms to rank')
    measure = {'union': hypervolume, 'box_sum': box_volume_sum}[mode]
    entries = []
    for name, solutions in per_algorithm_solutions.items():
        solutions = list(solutions)
        if not solutions:
            raise EmptyInput(f"algorithm {name!r} has no solutions")
        front = pareto_front(solutions)
        hv = measure(front, reference)
        entries.append(AlgorithmEntry(name, front, hv, reference_volume - hv))
    entries.sort(key=lambda e: (e.difference, e.algorithm))
    for name in include_discarded:
        if name not in per_algorithm_solutions:
            entries.append(AlgorithmEntry(name, implemented=False))
    for e in entries:
        if e.implemented:
            logger.info(f"{e.algorithm}: {len(e.front)} non-dominated windows, hypervolume {e.hypervolume:.4f}")
    return HypervolumeReport(entries, tuple(metric_names), reference_volume, mode)
