import functools

import numpy as np
import pytest

from errors import EmptyModel, EmptySeries
from models import DTWNearestNeighbor, DTWParams, dtw_distance


def enumerate_alignments(a, b):
    """Minimum cost over every monotone warping path, by explicit enumeration."""
    a, b = np.atleast_2d(a.T).T, np.atleast_2d(b.T).T
    n, m = len(a), len(b)

    @functools.lru_cache(maxsize=None)
    def paths(i, j):
        if (i, j) == (0, 0):
            return [((0, 0),)]
        out = []
        for di, dj in ((1, 0), (0, 1), (1, 1)):
            pi, pj = i - di, j - dj
            if pi >= 0 and pj >= 0:
                out.extend(p + ((i, j),) for p in paths(pi, pj))
        return out

    best = np.inf
    for path in paths(n - 1, m - 1):
        total = 0.0
        for i, j in path:
            total = total + float(np.sum((a[i] - b[j]) ** 2))
        best = min(best, total)
    return best


def test_examples():
    assert dtw_distance([1.0, 2.0, 3.0], [2.0, 3.0]) == 1.0
    assert dtw_distance([[0.0, 0.0], [1.0, 1.0]], [[0.0, 0.0], [2.0, 2.0]]) == 2.0


def test_identity_and_symmetry():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 7))
    y = rng.normal(size=(4, 7))
    assert dtw_distance(x, x) == 0.0
    assert dtw_distance(x, y) == dtw_distance(y, x)
    assert dtw_distance(x, y) > 0


def test_matches_alignment_enumeration():
    rng = np.random.default_rng(1)
    for _ in range(500):
        dims = int(rng.integers(1, 8))
        a = rng.integers(-4, 5, size=(int(rng.integers(1, 7)), dims)).astype(np.float64)
        b = rng.integers(-4, 5, size=(int(rng.integers(1, 7)), dims)).astype(np.float64)
        assert dtw_distance(a, b) == enumerate_alignments(a, b)


def test_empty_series():
    with pytest.raises(EmptySeries):
        dtw_distance([], [1.0])


def blocks(rng, n, w=5):
    return rng.normal(size=(n, w * 7))


def test_one_nn_returns_label_of_stored_series():
    rng = np.random.default_rng(2)
    X = np.hstack([blocks(rng, 10), rng.normal(size=(10, 3))])
    y = np.array([0, 1] * 5)
    model = DTWNearestNeighbor(DTWParams()).fit(X, y, obs_per_instance=5)
    assert np.array_equal(model.predict(X), y)


def test_one_nn_picks_closer_series():
    rng = np.random.default_rng(3)
    X = blocks(rng, 2)
    q = X[1] + 0.01 * rng.normal(size=X.shape[1])
    a = dtw_distance(q.reshape(5, 7), X[0].reshape(5, 7))
    b = dtw_distance(q.reshape(5, 7), X[1].reshape(5, 7))
    assert b < a
    model = DTWNearestNeighbor(DTWParams()).fit(X, np.array([0, 1]), obs_per_instance=5)
    assert model.predict(q[None, :]).tolist() == [1]
    proba = model.predict_proba(q[None, :])[0]
    assert proba == pytest.approx(a / (a + b))


def test_training_order_does_not_matter():
    rng = np.random.default_rng(4)
    X = blocks(rng, 20)
    y = rng.integers(0, 2, size=20)
    Q = blocks(rng, 10)
    perm = rng.permutation(20)
    a = DTWNearestNeighbor(DTWParams()).fit(X, y, obs_per_instance=5).predict(Q)
    b = DTWNearestNeighbor(DTWParams()).fit(X[perm], y[perm], obs_per_instance=5).predict(Q)
    assert np.array_equal(a, b)


def test_ties_go_to_lower_index():
    X = np.zeros((3, 7))
    model = DTWNearestNeighbor(DTWParams()).fit(X, np.array([1, 0, 0]), obs_per_instance=1)
    assert model.predict(np.zeros((1, 7))).tolist() == [1]


def test_empty_model():
    model = DTWNearestNeighbor(DTWParams())
    with pytest.raises(EmptyModel):
        model.predict(np.zeros((1, 35)))
