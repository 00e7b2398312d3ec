"""Exact K-nearest-neighbour classification.

Two interchangeable indexes return the same neighbour sets: a ball tree with
node arrays built once at fit time, and a brute-force scan batched through torch.
Neighbours are ordered by (distance, training index), so equal distances go to
the lower index.
"""
import heapq
import logging

import numpy as np
import torch

from .base import Algorithm, Estimator, check_fit_data, register

logger = logging.getLogger(__name__)

_PRUNE_RTOL = 1e-9
_PRUNE_ATOL = 1e-12


def minkowski_power(diff, p):
    """sum |diff|^p over the last axis (the p-th power of the Minkowski distance)."""
    if p == 2:
        return np.sum(diff * diff, axis=-1)
    return np.sum(np.abs(diff) ** p, axis=-1)


def _merge(best_d, best_i, d, i, k):
    d = np.concatenate([best_d, d])
    i = np.concatenate([best_i, i])
    order = np.lexsort((i, d))[:k]
    return d[order], i[order]


class BallTree(object):
    def __init__(self, X, leaf_size=40, p=2.0):
        self.X = np.asarray(X, dtype=np.float64)
        self.p = float(p)
        self.leaf_size = int(leaf_size)
        self.index = np.arange(self.X.shape[0])
        self.start, self.end, self.left, self.right = [], [], [], []
        self.centroid, self.radius = [], []
        self._build()

    def _new_node(self, start, end):
        pts = self.X[self.index[start:end]]
        centroid = pts.mean(axis=0)
        radius = float(minkowski_power(pts - centroid, self.p).max() ** (1.0 / self.p))
        self.start.append(start)
        self.end.append(end)
        self.left.append(-1)
        self.right.append(-1)
        self.centroid.append(centroid)
        self.radius.append(radius)
        return len(self.start) - 1

    def _build(self):
        if self.X.shape[0] == 0:
            return
        stack = [self._new_node(0, self.X.shape[0])]
        while stack:
            node = stack.pop()
            start, end = self.start[node], self.end[node]
            if end - start <= self.leaf_size:
                continue
            rows = self.index[start:end]
            pts = self.X[rows]
            spread = np.ptp(pts, axis=0)
            dim = int(np.argmax(spread))
            if spread[dim] == 0:
                continue
            order = np.argsort(pts[:, dim], kind='mergesort')
            self.index[start:end] = rows[order]
            mid = start + (end - start) // 2
            self.left[node] = self._new_node(start, mid)
            self.right[node] = self._new_node(mid, end)
            stack.extend([self.right[node], self.left[node]])
        self.centroid = np.asarray(self.centroid)
        self.radius = np.asarray(self.radius)

    def _lower_bound(self, q, node):
        d = float(minkowski_power(q - self.centroid[node], self.p) ** (1.0 / self.p))
        return max(0.0, d - self.radius[node]) ** self.p

    def query(self, q, k):
        """Indices and p-th-power distances of the k nearest training rows to q."""
        q = np.asarray(q, dtype=np.float64)
        best_d = np.empty(0)
        best_i = np.empty(0, dtype=np.int64)
        heap = [(self._lower_bound(q, 0), 0)]
        while heap:
            bound, node = heapq.heappop(heap)
            if len(best_d) == k and bound > best_d[-1] * (1 + _PRUNE_RTOL) + _PRUNE_ATOL:
                break
            if self.left[node] == -1:
                rows = self.index[self.start[node]:self.end[node]]
                best_d, best_i = _merge(best_d, best_i, minkowski_power(self.X[rows] - q, self.p), rows, k)
            else:
                for child in (self.left[node], self.right[node]):
                    heapq.heappush(heap, (self._lower_bound(q, child), child))
        return best_i, best_d


def brute_neighbors(X, Q, k, p=2.0, batch_elements=1 << 24):
    """k nearest training rows for every query row by a full scan in torch (float64)."""
    Xt = torch.from_numpy(np.ascontiguousarray(X, dtype=np.float64))
    Qt = torch.from_numpy(np.ascontiguousarray(Q, dtype=np.float64))
    n, dims = Xt.shape
    batch = max(1, batch_elements // max(1, n * dims))
    out = []
    for s in range(0, Qt.shape[0], batch):
        diff = Qt[s:s + batch, None, :] - Xt[None, :, :]
        if p == 2:
            dist = (diff * diff).sum(dim=-1)
        else:
            dist = diff.abs().pow(p).sum(dim=-1)
        _, order = torch.sort(dist, dim=1, stable=True)
        out.append(order[:, :k].numpy())
    return np.concatenate(out, axis=0) if out else np.empty((0, k), dtype=np.int64)


@register(Algorithm.KNN)
class KNearestNeighbors(Estimator):
    def __init__(self, params):
        super(KNearestNeighbors, self).__init__(params)
        self.X = None
        self.y = None
        self._tree = None

    def fit(self, X, y, seed=0, obs_per_instance=None):
        self.X, self.y = check_fit_data(X, y)
        if self.params.index not in ('ball_tree', 'brute'):
            raise ValueError(f"unknown neighbour index {self.params.index!r}")
        self._tree = None
        return self

    @property
    def tree(self):
        if self._tree is None:
            self._tree = BallTree(self.X, leaf_size=self.params.leaf_size, p=self.params.p)
        return self._tree

    def kneighbors(self, Q):
        """(n_queries, k) training indices, nearest first; k is capped at the training size."""
        Q = np.asarray(Q, dtype=np.float64)
        k = min(self.params.k, self.X.shape[0])
        if self.params.index == 'brute':
            return brute_neighbors(self.X, Q, k, self.params.p)
        return np.stack([self.tree.query(q, k)[0] for q in Q]) if len(Q) else np.empty((0, k), dtype=np.int64)

    def predict_proba(self, X):
        return self.y[self.kneighbors(X)].mean(axis=1)

    def to_state(self):
        return {'X': self.X.tolist(), 'y': self.y.tolist()}

    @classmethod
    def from_state(cls, params, state):
        model = cls(params)
        model.X = np.asarray(state['X'], dtype=np.float64).reshape(len(state['y']), -1)
        model.y = np.asarray(state['y'], dtype=np.int64)
        return model
