import numpy as np
import pytest

from errors import EmptyData, EmptyNode
from models import (DecisionTree, ForestParams, HyperParams, RandomForest, TreeParams, build_tree, gini,
                    train_forest, train_tree)
from models.forest import resolve_max_features


def noisy_blobs(n=400, f=6, shift=1.0, seed=0):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.4).astype(np.int64)
    X = rng.normal(size=(n, f)) + shift * y[:, None] * (np.arange(f) % 2)
    return X, y


def test_gini():
    assert gini((10, 0)) == 0.0
    assert gini((5, 5)) == 0.5
    assert gini((7, 3)) == pytest.approx(0.42)
    with pytest.raises(EmptyNode):
        gini((0, 0))


def test_separable_one_dimensional():
    X = np.array([[-3.0], [-2.0], [-1.0], [0.0], [1.0], [2.0]])
    y = np.array([0, 0, 0, 1, 1, 1])
    model = train_tree(X, y)
    tree = model.estimator.tree
    assert tree.depth == 1
    assert tree.threshold[0] == -0.5
    assert np.array_equal(model.predict(X, model.schema_hash), y)


def test_single_class_is_a_leaf():
    model = train_tree(np.arange(10.0)[:, None], np.ones(10, dtype=np.int64))
    assert model.estimator.tree.node_count == 1
    assert np.all(model.predict_proba(np.array([[100.0]]), model.schema_hash) == 1.0)


def test_xor():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    model = train_tree(X, y, HyperParams(tree=TreeParams(max_depth=2)))
    assert np.array_equal(model.predict(X, model.schema_hash), y)


def test_depth_limit():
    X, y = noisy_blobs()
    for depth in (1, 3, 5):
        assert DecisionTree(TreeParams(max_depth=depth)).fit(X, y).tree.depth <= depth


def test_empty_data():
    with pytest.raises(EmptyData):
        DecisionTree(TreeParams()).fit(np.empty((0, 3)), np.empty(0))


def test_weighted_split_follows_weights():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 1, 0, 1])
    w = np.array([1.0, 1e-9, 1.0, 1.0])
    tree = build_tree(X, y, 'gini', sample_weight=w, max_depth=1)
    # the nearly weightless positive at x=1 is ignored
    assert tree.threshold[0] == 2.5


def test_resolve_max_features():
    assert resolve_max_features('sqrt', 38) == 7
    assert resolve_max_features('all', 38) is None
    assert resolve_max_features('3', 38) == 3
    assert resolve_max_features(100, 38) == 38


def test_single_tree_forest_equals_tree():
    X, y = noisy_blobs()
    forest = RandomForest(ForestParams(n_estimators=1, max_depth=17, bootstrap=False, max_features='all'))
    forest.fit(X, y, seed=4)
    tree = DecisionTree(TreeParams(max_depth=17)).fit(X, y)
    Q = np.random.default_rng(1).normal(size=(200, X.shape[1]))
    assert np.array_equal(forest.predict(Q), tree.predict(Q))


def test_forest_is_deterministic():
    X, y = noisy_blobs()
    params = HyperParams(forest=ForestParams(n_estimators=25))
    a = train_forest(X, y, params, seed=3)
    b = train_forest(X, y, params, seed=3)
    assert a.estimator.to_state() == b.estimator.to_state()
    c = train_forest(X, y, params, seed=4)
    assert a.estimator.to_state() != c.estimator.to_state()


def test_forest_beats_single_tree_on_noisy_data():
    X, y = noisy_blobs(n=800, seed=2)
    Xt, yt = noisy_blobs(n=800, seed=3)
    tree = DecisionTree(TreeParams()).fit(X, y)
    forest = RandomForest(ForestParams(n_estimators=100)).fit(X, y, seed=0)
    assert (forest.predict(Xt) == yt).mean() >= (tree.predict(Xt) == yt).mean()


def test_forest_probabilities_are_vote_fractions():
    X, y = noisy_blobs()
    forest = RandomForest(ForestParams(n_estimators=10)).fit(X, y, seed=0)
    proba = forest.predict_proba(X)
    assert np.allclose(proba * 10, np.round(proba * 10))
