import logging
import math

import numpy as np
from joblib import Parallel, delayed

import util
from .base import Algorithm, Estimator, TreeParams, check_fit_data, register
from .tree import DecisionTree, Tree

logger = logging.getLogger(__name__)


def resolve_max_features(max_features, n_features):
    if max_features in (None, 'all'):
        return None
    if max_features == 'sqrt':
        return int(math.ceil(math.sqrt(n_features)))
    return max(1, min(int(max_features), n_features))


def _grow_one(X, y, seed_seq, tree_params, max_features, bootstrap):
    rng = np.random.default_rng(seed_seq)
    if bootstrap:
        rows = rng.integers(0, X.shape[0], size=X.shape[0])
        X, y = X[rows], y[rows]
    tree = DecisionTree(tree_params, max_features=max_features)
    tree.fit(X, y, rng=rng)
    return tree.tree


@register(Algorithm.FOREST)
class RandomForest(Estimator):
    """Bagged gini trees; predict_proba is the fraction of trees voting class 1."""

    def __init__(self, params):
        super(RandomForest, self).__init__(params)
        self.trees = []

    def fit(self, X, y, seed=0, obs_per_instance=None):
        X, y = check_fit_data(X, y)
        p = self.params
        if p.n_estimators < 1:
            raise ValueError('a forest needs at least one tree')
        tree_params = TreeParams(max_depth=p.max_depth, min_samples_split=p.min_samples_split,
                                 split_criterion=p.split_criterion)
        max_features = resolve_max_features(p.max_features, X.shape[1])
        children = np.random.SeedSequence(util.substream(seed, 'bootstrap')).spawn(p.n_estimators)
        self.trees = Parallel(n_jobs=p.n_jobs)(
            delayed(_grow_one)(X, y, child, tree_params, max_features, p.bootstrap) for child in children)
        logger.debug(f"forest: {len(self.trees)} trees, max depth {max(t.depth for t in self.trees)}")
        return self

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        votes = np.zeros(X.shape[0])
        for tree in self.trees:
            votes += tree.predict_value(X) > 0.5
        return votes / len(self.trees)

    def to_state(self):
        return {'trees': [t.to_state() for t in self.trees]}

    @classmethod
    def from_state(cls, params, state):
        model = cls(params)
        model.trees = [Tree.from_state(s) for s in state['trees']]
        return model
