"""Array-backed CART trees.

Nodes are stored in flat arrays; a sample goes left when x[feature] <= threshold.
Classification trees split on weighted gini and store the class-1 fraction in
each leaf; regression trees (boosting stages) split on squared error and store a
Newton step sum(g) / sum(h).
"""
import logging

import numpy as np

from errors import EmptyNode
from .base import Algorithm, Estimator, check_fit_data, register

logger = logging.getLogger(__name__)

LEAF = -1
_TIE_TOL = 1e-12


def gini(class_counts):
    counts = np.asarray(class_counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise EmptyNode('gini of an empty node')
    p = counts / total
    return float(1.0 - np.sum(p * p))


class Tree(object):
    def __init__(self, feature, threshold, left, right, value, n_samples):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)

    @property
    def node_count(self):
        return len(self.feature)

    @property
    def depth(self):
        depth = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.left[i] != LEAF:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X):
        """Leaf index reached by every row of X."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.left[node] != LEAF)
        while len(active):
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.left[node[active]] != LEAF]
        return node

    def predict_value(self, X):
        return self.value[self.apply(X)]

    def to_state(self):
        return {'feature': self.feature.tolist(), 'threshold': self.threshold.tolist(),
                'left': self.left.tolist(), 'right': self.right.tolist(),
                'value': self.value.tolist(), 'n_samples': self.n_samples.tolist()}

    @classmethod
    def from_state(cls, state):
        return cls(state['feature'], state['threshold'], state['left'], state['right'],
                   state['value'], state['n_samples'])


def _best_split(Xn, a, b, criterion):
    """Best (feature column, threshold, score) over the columns of Xn, or None.

    For 'gini', a and b are the per-row class-1 and class-0 weights and the score
    (maximized) is sum_side (a^2 + b^2) / (a + b). For 'mse', a is the target and b
    is unused; the score is sum_side S^2 / n. Ties go to the lowest column, then
    the lowest threshold.
    """
    n, f = Xn.shape
    if n < 2:
        return None
    order = np.argsort(Xn, axis=0, kind='mergesort')
    xs = np.take_along_axis(Xn, order, axis=0)
    distinct = xs[1:] > xs[:-1]
    if not distinct.any():
        return None
    if criterion == 'gini':
        ca = np.cumsum(a[order], axis=0)
        cb = np.cumsum(b[order], axis=0)
        la, lb = ca[:-1], cb[:-1]
        ra, rb = ca[-1] - la, cb[-1] - lb
        wl, wr = la + lb, ra + rb
        valid = distinct & (wl > 0) & (wr > 0)
        with np.errstate(divide='ignore', invalid='ignore'):
            score = (la * la + lb * lb) / wl + (ra * ra + rb * rb) / wr
    else:
        cs = np.cumsum(a[order], axis=0)
        sl = cs[:-1]
        sr = cs[-1] - sl
        nl = np.arange(1, n, dtype=np.float64)[:, None]
        nr = n - nl
        valid = distinct
        score = sl * sl / nl + sr * sr / nr
    score = np.where(valid, score, -np.inf)
    best = score.max()
    if not np.isfinite(best):
        return None
    # feature-major scan so the first hit has the lowest feature, then lowest threshold
    hits = (score >= best - _TIE_TOL * max(1.0, abs(best))).T.ravel()
    flat = int(np.argmax(hits))
    col, pos = divmod(flat, n - 1)
    lo, hi = xs[pos, col], xs[pos + 1, col]
    threshold = lo + (hi - lo) / 2.0
    if not lo <= threshold < hi:
        threshold = lo
    return col, threshold, float(best)


def build_tree(X, target, criterion='gini', sample_weight=None, hessian=None, max_depth=17,
               min_samples_split=2, max_features=None, rng=None):
    """Grow a tree depth-first.

    criterion 'gini': target holds 0/1 labels, leaves store the weighted class-1 fraction.
    criterion 'mse': target holds gradients, leaves store sum(target) / sum(hessian).
    max_features: number of columns drawn (sorted ascending) at every split, None for all.
    """
    n, n_features = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if criterion == 'gini':
        a_all = w * (target == 1)
        b_all = w * (target != 1)
    else:
        a_all = np.asarray(target, dtype=np.float64)
        b_all = None
        h_all = np.ones(n) if hessian is None else np.asarray(hessian, dtype=np.float64)

    feature, threshold, left, right, value, n_samples = [], [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        n_samples.append(len(idx))
        if criterion == 'gini':
            pos, neg = a_all[idx].sum(), b_all[idx].sum()
            value.append(pos / (pos + neg) if pos + neg > 0 else 0.0)
        else:
            den = h_all[idx].sum()
            value.append(a_all[idx].sum() / den if abs(den) > 1e-150 else 0.0)
        return len(feature) - 1

    stack = [(new_node(np.arange(n)), np.arange(n), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < min_samples_split:
            continue
        if criterion == 'gini':
            if a_all[idx].sum() == 0 or b_all[idx].sum() == 0:
                continue
        elif np.ptp(a_all[idx]) == 0:
            continue
        if max_features is None or max_features >= n_features:
            cols = np.arange(n_features)
        else:
            cols = np.sort(rng.choice(n_features, size=max_features, replace=False))
        Xn = X[np.ix_(idx, cols)]
        split = _best_split(Xn, a_all[idx], None if b_all is None else b_all[idx], criterion)
        if split is None:
            continue
        col, thr, _ = split
        mask = Xn[:, col] <= thr
        li, ri = idx[mask], idx[~mask]
        feature[node] = int(cols[col])
        threshold[node] = float(thr)
        left[node] = new_node(li)
        right[node] = new_node(ri)
        # right pushed first so the left subtree gets the lower node ids
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(feature, threshold, left, right, value, n_samples)


@register(Algorithm.TREE)
class DecisionTree(Estimator):
    """CART classifier with gini splits and class-fraction leaves."""

    def __init__(self, params, max_features=None):
        super(DecisionTree, self).__init__(params)
        self.max_features = max_features
        self.tree = None

    def fit(self, X, y, seed=0, obs_per_instance=None, sample_weight=None, rng=None):
        X, y = check_fit_data(X, y)
        if self.params.split_criterion != 'gini':
            raise ValueError(f"unsupported split criterion {self.params.split_criterion!r}")
        self.tree = build_tree(X, y, 'gini', sample_weight=sample_weight, max_depth=self.params.max_depth,
                               min_samples_split=self.params.min_samples_split,
                               max_features=self.max_features,
                               rng=rng if rng is not None else np.random.default_rng(seed))
        return self

    def predict_proba(self, X):
        return self.tree.predict_value(X)

    def to_state(self):
        return {'tree': self.tree.to_state()}

    @classmethod
    def from_state(cls, params, state):
        model = cls(params)
        model.tree = Tree.from_state(state['tree'])
        return model
