import numpy as np

from models import BallTree, HyperParams, KNNParams, KNearestNeighbors, brute_neighbors, train


def test_ball_tree_matches_brute_force():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(5000, 6))
    Q = rng.normal(size=(1000, 6))
    tree = BallTree(X, leaf_size=40)
    expected = brute_neighbors(X, Q, 17)
    for q, brute in zip(Q, expected):
        idx, dist = tree.query(q, 17)
        assert set(idx.tolist()) == set(brute.tolist())
        assert np.all(np.diff(dist) >= 0)


def test_ball_tree_manhattan():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(800, 3))
    Q = rng.uniform(size=(50, 3))
    tree = BallTree(X, leaf_size=10, p=1.0)
    expected = brute_neighbors(X, Q, 5, p=1.0)
    for q, brute in zip(Q, expected):
        assert set(tree.query(q, 5)[0].tolist()) == set(brute.tolist())


def test_ties_go_to_lower_index():
    X = np.array([[1.0], [-1.0], [1.0], [5.0]])
    idx, _ = BallTree(X, leaf_size=1).query(np.array([0.0]), 2)
    assert idx.tolist() == [0, 1]
    assert brute_neighbors(X, np.array([[0.0]]), 2)[0].tolist() == [0, 1]


def test_query_equal_to_training_point():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 4))
    y = rng.integers(0, 2, size=30)
    model = train(X, y, 'knn', HyperParams(knn=KNNParams(k=1)))
    assert np.array_equal(model.predict(X, model.schema_hash), y)


def test_k_larger_than_training_set_uses_everything():
    X = np.arange(6.0)[:, None]
    y = np.array([1, 1, 1, 1, 0, 0])
    model = KNearestNeighbors(KNNParams(k=17)).fit(X, y)
    assert model.kneighbors(np.array([[0.0]])).shape == (1, 6)
    assert np.all(model.predict(np.array([[100.0], [-3.0]])) == 1)


def test_vote_tie_is_class_zero():
    X = np.array([[0.0], [1.0]])
    model = KNearestNeighbors(KNNParams(k=2)).fit(X, np.array([1, 0]))
    assert model.predict(np.array([[0.5]])).tolist() == [0]


def test_brute_and_tree_indexes_agree():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(400, 5))
    y = (X[:, 0] > 0).astype(np.int64)
    Q = rng.normal(size=(100, 5))
    a = KNearestNeighbors(KNNParams(index='ball_tree')).fit(X, y)
    b = KNearestNeighbors(KNNParams(index='brute')).fit(X, y)
    assert np.array_equal(a.predict_proba(Q), b.predict_proba(Q))
