"""Gradient boosting with binomial deviance and real AdaBoost (SAMME.R)."""
import logging

import numpy as np
from scipy.special import expit, logit

from .base import Algorithm, Estimator, TreeParams, check_fit_data, register
from .tree import DecisionTree, Tree, build_tree

logger = logging.getLogger(__name__)

PROBA_CLAMP = 1e-6


def binomial_deviance(y, raw):
    """Mean binomial deviance, -2 * mean log-likelihood, of raw log-odds."""
    # log(1 + exp(raw)) - y * raw, written to stay finite for large |raw|
    return float(2.0 * np.mean(np.logaddexp(0.0, raw) - y * raw))


@register(Algorithm.GBM)
class GradientBoosting(Estimator):
    def __init__(self, params):
        super(GradientBoosting, self).__init__(params)
        self.init_raw = 0.0
        self.trees = []
        self.train_deviance = []

    def fit(self, X, y, seed=0, obs_per_instance=None):
        X, y = check_fit_data(X, y)
        p = self.params
        if p.loss != 'deviance':
            raise ValueError(f"unsupported loss {p.loss!r}")
        prior = float(np.clip(y.mean(), PROBA_CLAMP, 1 - PROBA_CLAMP))
        self.init_raw = float(logit(prior))
        raw = np.full(X.shape[0], self.init_raw)
        self.trees = []
        self.train_deviance = []
        for stage in range(p.n_estimators):
            prob = expit(raw)
            residual = y - prob
            hessian = prob * (1 - prob)
            tree = build_tree(X, residual, 'mse', hessian=hessian, max_depth=p.max_depth,
                              min_samples_split=p.min_samples_split)
            raw = raw + p.learning_rate * tree.predict_value(X)
            self.trees.append(tree)
            self.train_deviance.append(binomial_deviance(y, raw))
        if self.train_deviance:
            logger.debug(f"gbm: {len(self.trees)} stages, final deviance {self.train_deviance[-1]:.6f}")
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        raw = np.full(X.shape[0], self.init_raw)
        for tree in self.trees:
            raw += self.params.learning_rate * tree.predict_value(X)
        return raw

    def predict_proba(self, X):
        return expit(self.decision_function(X))

    def to_state(self):
        return {'init_raw': self.init_raw, 'trees': [t.to_state() for t in self.trees],
                'train_deviance': list(self.train_deviance)}

    @classmethod
    def from_state(cls, params, state):
        model = cls(params)
        model.init_raw = state['init_raw']
        model.trees = [Tree.from_state(s) for s in state['trees']]
        model.train_deviance = list(state.get('train_deviance', []))
        return model


def _half_log_odds(prob):
    prob = np.clip(prob, PROBA_CLAMP, 1 - PROBA_CLAMP)
    return 0.5 * (np.log(prob) - np.log(1 - prob))


@register(Algorithm.ADABOOST)
class AdaBoost(Estimator):
    """SAMME.R: each stage adds h(x) = 1/2 log(p / (1 - p)) of a weighted tree.

    Training stops early, keeping the fitted stages, when the instance weights
    collapse onto a single instance or stop being finite.
    """

    def __init__(self, params):
        super(AdaBoost, self).__init__(params)
        self.trees = []
        self.weight_sums = []
        self.degenerate_stop = False

    def fit(self, X, y, seed=0, obs_per_instance=None):
        X, y = check_fit_data(X, y)
        p = self.params
        if p.variant != 'SAMME.R':
            raise ValueError(f"unsupported AdaBoost variant {p.variant!r}")
        base = TreeParams(max_depth=p.max_depth)
        signs = 2.0 * y - 1.0
        weights = np.full(X.shape[0], 1.0 / X.shape[0])
        self.trees, self.weight_sums, self.degenerate_stop = [], [], False
        for stage in range(p.n_estimators):
            learner = DecisionTree(base).fit(X, y, sample_weight=weights)
            self.trees.append(learner.tree)
            h = _half_log_odds(learner.predict_proba(X))
            weights = weights * np.exp(-p.learning_rate * signs * h)
            total = weights.sum()
            if not np.isfinite(total) or total <= 0:
                self.degenerate_stop = True
                break
            weights = weights / total
            self.weight_sums.append(float(weights.sum()))
            if weights.max() >= 1.0 - 1e-12:
                self.degenerate_stop = True
                break
        if self.degenerate_stop:
            logger.warning(f"adaboost: instance weights collapsed, stopped after {len(self.trees)} stages")
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        score = np.zeros(X.shape[0])
        for tree in self.trees:
            score += _half_log_odds(tree.predict_value(X))
        return score

    def predict_proba(self, X):
        return expit(2.0 * self.decision_function(X))

    def to_state(self):
        return {'trees': [t.to_state() for t in self.trees], 'weight_sums': list(self.weight_sums),
                'degenerate_stop': self.degenerate_stop}

    @classmethod
    def from_state(cls, params, state):
        model = cls(params)
        model.trees = [Tree.from_state(s) for s in state['trees']]
        model.weight_sums = list(state.get('weight_sums', []))
        model.degenerate_stop = bool(state.get('degenerate_stop', False))
        return model
