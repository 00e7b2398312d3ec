from .base import (Algorithm, AdaBoostParams, DISCARDED, DISPLAY_NAMES, DTWParams, ESTIMATORS, Estimator,
                   ForestParams, GBMParams, HyperParams, KNNParams, TrainedModel, TreeParams)
from .tree import DecisionTree, Tree, build_tree, gini
from .forest import RandomForest
from .boosting import AdaBoost, GradientBoosting, binomial_deviance
from .neighbors import BallTree, KNearestNeighbors, brute_neighbors
from .dtw import DTWNearestNeighbor, dtw_distance


def make_estimator(algorithm, params=None):
    params = params if params is not None else HyperParams()
    algorithm = Algorithm(algorithm)
    return ESTIMATORS[algorithm](params.section(algorithm))


def train(X, y, algorithm, params=None, seed=0, schema_hash='', obs_per_instance=None, metadata=None):
    """Fit one estimator and wrap it as a TrainedModel."""
    params = params if params is not None else HyperParams()
    estimator = make_estimator(algorithm, params).fit(X, y, seed=seed, obs_per_instance=obs_per_instance)
    return TrainedModel(Algorithm(algorithm), estimator, schema_hash, params, seed, dict(metadata or {}))


def train_tree(X, y, params=None, seed=0):
    return train(X, y, Algorithm.TREE, params, seed)


def train_forest(X, y, params=None, seed=0):
    return train(X, y, Algorithm.FOREST, params, seed)


def train_gbm(X, y, params=None, seed=0):
    return train(X, y, Algorithm.GBM, params, seed)


def train_adaboost(X, y, params=None, seed=0):
    return train(X, y, Algorithm.ADABOOST, params, seed)


def knn_predict(model, query, schema_hash):
    return model.predict(query, schema_hash)


def dtw_1nn_predict(model, query_series, schema_hash):
    return model.predict(query_series, schema_hash)
