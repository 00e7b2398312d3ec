import dataclasses
import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from errors import EmptyData, SchemaMismatch

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class Algorithm(str, enum.Enum):
    TREE = 'tree'
    FOREST = 'forest'
    GBM = 'gbm'
    ADABOOST = 'adaboost'
    KNN = 'knn'
    DTW1NN = 'dtw'


DISPLAY_NAMES = {
    Algorithm.TREE: 'Decision Tree',
    Algorithm.FOREST: 'Random Forests',
    Algorithm.GBM: 'Gradient Boosting',
    Algorithm.ADABOOST: 'AdaBoost',
    Algorithm.KNN: 'Nearest Neighbors',
    Algorithm.DTW1NN: 'Dynamic Time Warping',
}

# evaluated in the original study and dropped for poor results; names only
DISCARDED = ('Logistic Regression', 'SVM', 'Naive Bayes', 'MLP', 'LSTM', 'Conv-1D')


# hyper-parameters ###############################################################

@dataclass
class TreeParams:
    max_depth: int = 17
    min_samples_split: int = 2
    split_criterion: str = 'gini'


@dataclass
class ForestParams:
    n_estimators: int = 1000
    max_depth: int = 23
    min_samples_split: int = 2
    split_criterion: str = 'gini'
    # 'sqrt', 'all' or an integer count
    max_features: str = 'sqrt'
    bootstrap: bool = True
    n_jobs: int = 1


@dataclass
class GBMParams:
    n_estimators: int = 100
    max_depth: int = 5
    learning_rate: float = 1.0
    loss: str = 'deviance'
    min_samples_split: int = 2


@dataclass
class AdaBoostParams:
    n_estimators: int = 400
    learning_rate: float = 1.0
    variant: str = 'SAMME.R'
    max_depth: int = 1


@dataclass
class KNNParams:
    k: int = 17
    p: float = 2.0
    # 'ball_tree' or 'brute'
    index: str = 'ball_tree'
    leaf_size: int = 40


@dataclass
class DTWParams:
    variant: str = 'dependent'
    k: int = 1


@dataclass
class HyperParams:
    tree: TreeParams = field(default_factory=TreeParams)
    forest: ForestParams = field(default_factory=ForestParams)
    gbm: GBMParams = field(default_factory=GBMParams)
    adaboost: AdaBoostParams = field(default_factory=AdaBoostParams)
    knn: KNNParams = field(default_factory=KNNParams)
    dtw: DTWParams = field(default_factory=DTWParams)

    def section(self, algorithm):
        return getattr(self, Algorithm(algorithm).value)

    def override(self, assignments):
        """Apply 'section.field=value' strings, coercing to the field's type."""
        for assignment in assignments or ():
            key, sep, raw = assignment.partition('=')
            section_name, dot, field_name = key.strip().partition('.')
            if not sep or not dot:
                raise ValueError(f"parameter override must look like section.field=value, got {assignment!r}")
            section = getattr(self, section_name, None)
            if section is None or not dataclasses.is_dataclass(section):
                raise ValueError(f"unknown parameter section {section_name!r}")
            if field_name not in {f.name for f in dataclasses.fields(section)}:
                raise ValueError(f"unknown parameter {section_name}.{field_name}")
            setattr(section, field_name, _coerce(getattr(section, field_name), raw.strip()))
        return self

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**{f.name: f.default_factory(**d.get(f.name, {})) for f in dataclasses.fields(cls)})


def _coerce(current, raw):
    if isinstance(current, bool):
        if raw.lower() in ('1', 'true', 'yes', 'on'):
            return True
        if raw.lower() in ('0', 'false', 'no', 'off'):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


# estimators #####################################################################

ESTIMATORS = {}


def register(algorithm):
    def wrap(cls):
        cls.algorithm = Algorithm(algorithm)
        ESTIMATORS[cls.algorithm] = cls
        return cls
    return wrap


def check_fit_data(X, y):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyData('training data is empty')
    if len(y) != X.shape[0]:
        raise ValueError(f"{X.shape[0]} rows for {len(y)} labels")
    if not np.isin(y, (0, 1)).all():
        raise ValueError('labels must be binary 0/1')
    return X, y


class Estimator(object):
    """Binary classifier over flat feature vectors.

    Subclasses implement fit, predict_proba (probability of class 1), to_state and
    from_state. A probability of exactly 0.5 predicts class 0.
    """
    algorithm = None

    def __init__(self, params):
        self.params = params

    def fit(self, X, y, seed=0, obs_per_instance=None):
        raise NotImplementedError

    def predict_proba(self, X):
        raise NotImplementedError

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(np.int64)

    def to_state(self):
        raise NotImplementedError

    @classmethod
    def from_state(cls, params, state):
        raise NotImplementedError


@dataclass
class TrainedModel:
    algorithm: Algorithm
    estimator: Estimator
    schema_hash: str
    params: HyperParams
    seed: int = 0
    # window, task, schema, standardizer and anything else the caller embeds
    metadata: dict = field(default_factory=dict)

    def _check(self, X, schema_hash):
        if schema_hash != self.schema_hash:
            raise SchemaMismatch(f"model expects feature schema {self.schema_hash}, got {schema_hash}")
        return np.asarray(X, dtype=np.float64)

    def predict(self, X, schema_hash):
        """Labels for X; SCHEMA_HASH must be the hash of the schema X was built with."""
        return self.estimator.predict(self._check(X, schema_hash))

    def predict_proba(self, X, schema_hash):
        return self.estimator.predict_proba(self._check(X, schema_hash))

    def to_dict(self):
        return {'format_version': FORMAT_VERSION,
                'algorithm': self.algorithm.value,
                'schema_hash': self.schema_hash,
                'seed': self.seed,
                'params': self.params.to_dict(),
                'metadata': self.metadata,
                'state': self.estimator.to_state()}

    @classmethod
    def from_dict(cls, d):
        if d.get('format_version') != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {d.get('format_version')}")
        algorithm = Algorithm(d['algorithm'])
        params = HyperParams.from_dict(d['params'])
        estimator = ESTIMATORS[algorithm].from_state(params.section(algorithm), d['state'])
        return cls(algorithm, estimator, d['schema_hash'], params, d.get('seed', 0), d.get('metadata', {}))
