"""Dependent multivariate DTW and the 1-nearest-neighbour classifier built on it."""
import logging

import numpy as np

from errors import EmptyModel, EmptySeries
from .base import Algorithm, Estimator, check_fit_data, register

logger = logging.getLogger(__name__)

N_VARIABLES = 7

try:
    from numba import njit
    using_numba = True

    def dtw_jit(f):
        return njit(cache=True, nogil=True)(f)
except ImportError:
    using_numba = False

    def dtw_jit(f):
        return f


@dtw_jit
def _dtw(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.full(m + 1, np.inf)
    cur = np.full(m + 1, np.inf)
    prev[0] = 0.0
    for i in range(1, n + 1):
        cur[0] = np.inf
        for j in range(1, m + 1):
            cost = 0.0
            for d in range(a.shape[1]):
                diff = a[i - 1, d] - b[j - 1, d]
                cost += diff * diff
            best = prev[j]
            if cur[j - 1] < best:
                best = cur[j - 1]
            if prev[j - 1] < best:
                best = prev[j - 1]
            cur[j] = cost + best
        for j in range(m + 1):
            prev[j] = cur[j]
    return prev[m]


@dtw_jit
def _dtw_to_many(query, bank):
    out = np.empty(bank.shape[0])
    for t in range(bank.shape[0]):
        out[t] = _dtw(query, bank[t])
    return out


def _as_series(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] == 0:
        raise EmptySeries('DTW needs non-empty series')
    return np.ascontiguousarray(x)


def dtw_distance(series_a, series_b):
    """Unconstrained DTW with squared-Euclidean local cost over full observation vectors."""
    a, b = _as_series(series_a), _as_series(series_b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"series dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    return float(_dtw(a, b))


@register(Algorithm.DTW1NN)
class DTWNearestNeighbor(Estimator):
    """1-NN under dependent DTW over the W x 7 hemodynamic block of each instance.

    predict returns the label of the nearest training series (lower index on ties);
    predict_proba is d0 / (d0 + d1) with d_c the nearest distance to class c.
    """

    def __init__(self, params):
        super(DTWNearestNeighbor, self).__init__(params)
        self.series = None
        self.y = None
        self.obs_per_instance = None

    def fit(self, X, y, seed=0, obs_per_instance=None):
        X, y = check_fit_data(X, y)
        if self.params.variant != 'dependent' or self.params.k != 1:
            raise ValueError('only dependent DTW with K=1 is supported')
        if obs_per_instance is None:
            raise ValueError('DTW needs the number of observations per instance')
        self.obs_per_instance = int(obs_per_instance)
        self.series = self._block(X)
        self.y = y
        logger.debug(f"dtw: {len(y)} training series, numba kernel {'on' if using_numba else 'off'}")
        return self

    def _block(self, X):
        X = np.asarray(X, dtype=np.float64)
        width = self.obs_per_instance * N_VARIABLES
        if X.shape[1] < width:
            raise ValueError(f"instances have {X.shape[1]} features, need at least {width}")
        return np.ascontiguousarray(X[:, :width].reshape(X.shape[0], self.obs_per_instance, N_VARIABLES))

    def distances(self, X):
        if self.series is None or len(self.series) == 0:
            raise EmptyModel('DTW model holds no training series')
        return np.stack([_dtw_to_many(q, self.series) for q in self._block(X)])

    def predict(self, X):
        return self.y[np.argmin(self.distances(X), axis=1)]

    def predict_proba(self, X):
        dist = self.distances(X)
        d = {}
        for c in (0, 1):
            mask = self.y == c
            d[c] = dist[:, mask].min(axis=1) if mask.any() else np.full(dist.shape[0], np.inf)
        d0, d1 = d[0], d[1]
        total = d0 + d1
        with np.errstate(invalid='ignore', divide='ignore'):
            proba = np.where(total > 0, d0 / total, 0.5)
        proba = np.where(np.isinf(d1), 0.0, proba)
        proba = np.where(np.isinf(d0), 1.0, proba)
        return proba

    def to_state(self):
        return {'obs_per_instance': self.obs_per_instance,
                'series': self.series.reshape(len(self.series), -1).tolist(), 'y': self.y.tolist()}

    @classmethod
    def from_state(cls, params, state):
        model = cls(params)
        model.obs_per_instance = state['obs_per_instance']
        model.y = np.asarray(state['y'], dtype=np.int64)
        flat = np.asarray(state['series'], dtype=np.float64).reshape(len(model.y), -1)
        model.series = np.ascontiguousarray(flat.reshape(len(model.y), model.obs_per_instance, N_VARIABLES))
        return model
