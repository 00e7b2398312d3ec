import numpy as np
import pytest

from errors import SchemaMismatch
from files import load_model, save_model
from models import (AdaBoostParams, Algorithm, ForestParams, GBMParams, HyperParams, KNNParams, TrainedModel,
                    dtw_1nn_predict, knn_predict, train)

SMALL = HyperParams(forest=ForestParams(n_estimators=15), gbm=GBMParams(n_estimators=20, learning_rate=0.3),
                    adaboost=AdaBoostParams(n_estimators=30), knn=KNNParams(k=5))


def dataset(seed=0, n=120, w=2):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.4).astype(np.int64)
    X = rng.normal(size=(n, w * 7 + 3)) + 0.7 * y[:, None]
    return X, y


@pytest.mark.parametrize('algorithm', list(Algorithm))
def test_round_trip_preserves_predictions(algorithm, tmp_path):
    X, y = dataset()
    model = train(X, y, algorithm, SMALL, seed=5, schema_hash='abc123', obs_per_instance=2,
                  metadata={'window': '2x0-30'})
    path = str(tmp_path / 'model.json')
    save_model(model, path)
    loaded = load_model(path)
    Q = np.random.default_rng(9).normal(size=(100, X.shape[1]))
    assert loaded.algorithm is algorithm
    assert loaded.schema_hash == 'abc123'
    assert loaded.metadata == {'window': '2x0-30'}
    assert loaded.params == SMALL
    assert np.array_equal(loaded.predict(Q, 'abc123'), model.predict(Q, 'abc123'))
    assert np.array_equal(loaded.predict_proba(Q, 'abc123'), model.predict_proba(Q, 'abc123'))


@pytest.mark.parametrize('algorithm', list(Algorithm))
def test_retraining_is_bit_identical(algorithm):
    X, y = dataset(1)
    Q = dataset(2)[0]
    a = train(X, y, algorithm, SMALL, seed=3, obs_per_instance=2)
    b = train(X, y, algorithm, SMALL, seed=3, obs_per_instance=2)
    assert np.array_equal(a.predict_proba(Q, a.schema_hash), b.predict_proba(Q, b.schema_hash))


def test_schema_hash_is_checked():
    X, y = dataset()
    model = train(X, y, Algorithm.TREE, schema_hash='abc123')
    with pytest.raises(SchemaMismatch):
        model.predict(X, schema_hash='other')
    with pytest.raises(TypeError):
        model.predict(X)
    with pytest.raises(SchemaMismatch):
        model.predict_proba(X, None)
    assert np.array_equal(model.predict(X, schema_hash='abc123'), model.estimator.predict(X))
    assert np.array_equal(knn_predict(model, X, 'abc123'), model.estimator.predict(X))
    with pytest.raises(SchemaMismatch):
        dtw_1nn_predict(model, X, 'other')


def test_unknown_format_version():
    X, y = dataset()
    d = train(X, y, Algorithm.TREE).to_dict()
    d['format_version'] = 99
    with pytest.raises(ValueError):
        TrainedModel.from_dict(d)


def test_parameter_overrides():
    params = HyperParams().override(['forest.n_estimators=200', 'forest.bootstrap=false', 'knn.p=1'])
    assert params.forest.n_estimators == 200
    assert params.forest.bootstrap is False
    assert params.knn.p == 1.0
    assert HyperParams.from_dict(params.to_dict()) == params
    for bad in ('forest.n_estimators', 'nope.k=1', 'knn.nope=1', 'forest.bootstrap=maybe'):
        with pytest.raises(ValueError):
            HyperParams().override([bad])
