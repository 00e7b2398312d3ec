"""Cross-validated evaluation, window sweeps and final-model training."""
import logging
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

try:
    from tensorboardX import SummaryWriter
except ImportError:
    SummaryWriter = None

import util
from data import FeatureSchema, Grouping, WindowSpec, balance, build_dataset, kfold_split, to_matrix
from errors import EmptyData, NoEligibleWindows, SchemaMismatch, SingleClass, StageFailed, TooFewGroups
from metrics import MetricVector, aggregate_metrics, evaluate_predictions
from models import DISPLAY_NAMES, Algorithm, HyperParams, TrainedModel, make_estimator
from preprocess import (StandardizationParams, apply_standardizer_matrix, clean_records,
                        fit_standardizer_matrix)
from selection import SELECTION_METRICS, Solution

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ('accuracy', 'sensitivity', 'specificity', 'precision', 'f_measure', 'roc_area', 'prc_area')
PIPELINE_ORDER = ('balance', 'split', 'standardize')


@dataclass
class CrossValidationResult:
    algorithm: Algorithm
    window: WindowSpec
    folds: List[MetricVector]
    aggregate: MetricVector
    n_instances: int
    n_balanced: int
    trace: List[str] = field(default_factory=list)
    predictions: Optional[np.ndarray] = None
    scores: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None


def check_pipeline_order(trace):
    """Balancing must precede the split, and the standardizer is fitted only after it."""
    first = {name: trace.index(name) for name in PIPELINE_ORDER if name in trace}
    if len(first) != len(PIPELINE_ORDER) or not first['balance'] < first['split'] < first['standardize']:
        raise RuntimeError(f"pipeline stages ran out of order: {trace}")


class CrossValidator(object):
    def __init__(self, algorithm, params=None, k=5, grouping=Grouping.PATIENT, minority_fraction=0.35,
                 seed=0, aggregate='mean'):
        self.algorithm = Algorithm(algorithm)
        self.params = params if params is not None else HyperParams()
        self.k = k
        self.grouping = Grouping(grouping)
        self.minority_fraction = minority_fraction
        self.seed = seed
        if aggregate not in ('mean', 'pooled'):
            raise ValueError(f"aggregate must be 'mean' or 'pooled', got {aggregate!r}")
        self.aggregate = aggregate

    def run(self, instances):
        """balance -> K-fold split -> per fold: standardize on train, fit, predict, score."""
        if not instances:
            raise EmptyData('no instances to evaluate')
        trace = []
        with util.stage('balance'):
            balanced = balance(instances, self.minority_fraction, self.seed)
            trace.append('balance')
        with util.stage('split'):
            plan = kfold_split(balanced, self.k, self.grouping, self.seed)
            trace.append('split')
        X, y, _ = to_matrix(balanced)
        schema = balanced[0].schema
        w = balanced[0].window.obs_per_instance
        predictions = np.zeros(len(y), dtype=np.int64)
        scores = np.zeros(len(y))
        folds = []
        fit_time = util.AverageMeter()
        for fold, (train, test) in enumerate(plan.folds()):
            with util.stage('standardize'):
                std = fit_standardizer_matrix(X[train], schema)
                trace.append('standardize')
                x_train = apply_standardizer_matrix(X[train], std, schema.hash)
                x_test = apply_standardizer_matrix(X[test], std, schema.hash)
            with util.stage('fit'):
                start = time.time()
                model = make_estimator(self.algorithm, self.params).fit(x_train, y[train], seed=self.seed,
                                                                         obs_per_instance=w)
                trace.append('fit')
            fit_time.update(time.time() - start)
            predictions[test] = model.predict(x_test)
            scores[test] = model.predict_proba(x_test)
            folds.append(evaluate_predictions(predictions[test], scores[test], y[test]))
            logger.debug(f"{self.algorithm.value} fold {fold}: F={folds[-1].f_measure:.4f}")
        check_pipeline_order(trace)
        logger.debug(f"{self.algorithm.value}: fit took {fit_time.avg:.2f}s per fold")
        if self.aggregate == 'mean':
            summary = aggregate_metrics(folds)
        else:
            summary = evaluate_predictions(predictions, scores, y)
        return CrossValidationResult(self.algorithm, balanced[0].window, folds, summary, len(instances),
                                     len(balanced), trace, predictions, scores, y)


# sweep ##########################################################################

@dataclass
class SweepReport:
    task: str
    seed: int
    rows: List[dict] = field(default_factory=list)
    skipped: List[dict] = field(default_factory=list)

    def to_frame(self):
        columns = ['algorithm', 'name', 'window', 'flag', 'obs_per_instance', 'window_start', 'window_end',
                   'n_instances', 'n_balanced'] + list(METRIC_COLUMNS) + ['average']
        return pd.DataFrame(self.rows, columns=columns)

    def to_dict(self):
        return {'task': self.task, 'seed': self.seed, 'rows': self.rows, 'skipped': self.skipped}

    @classmethod
    def from_frame(cls, frame, task='', seed=0):
        rows = frame.astype(object).where(frame.notna(), None).to_dict('records')
        return cls(task, seed, rows)

    def solutions(self, metric_names=SELECTION_METRICS):
        """{algorithm display name: [Solution]} for ranking."""
        out = {}
        for row in self.rows:
            values = tuple(float(row[m]) if row[m] is not None else 0.0 for m in metric_names)
            out.setdefault(row['name'], []).append(Solution(row['name'], row['window'], values))
        return out

    def best_f1(self):
        best = {}
        for row in self.rows:
            best[row['name']] = max(best.get(row['name'], 0.0), float(row['f_measure']))
        return best


def _cell(instances, algorithm, window, params, k, grouping, minority_fraction, seed, aggregate):
    start = time.time()
    try:
        result = CrossValidator(algorithm, params, k, grouping, minority_fraction, seed, aggregate).run(instances)
    except StageFailed as e:
        if isinstance(e.cause, (SingleClass, TooFewGroups, EmptyData)):
            return None, {'algorithm': algorithm.value, 'window': window.label, 'reason': str(e.cause)}
        raise
    except EmptyData as e:
        return None, {'algorithm': algorithm.value, 'window': window.label, 'reason': str(e)}
    logger.info(f"{algorithm.value} {window.label}: cell took {(time.time() - start) / 60:.2f}min")
    row = {'algorithm': algorithm.value, 'name': DISPLAY_NAMES[algorithm], 'window': window.label,
           'flag': window.flag, 'obs_per_instance': window.obs_per_instance,
           'window_start': window.window_start, 'window_end': window.window_end,
           'n_instances': result.n_instances, 'n_balanced': result.n_balanced}
    row.update({m: getattr(result.aggregate, m) for m in METRIC_COLUMNS})
    row['average'] = result.aggregate.average
    return row, None


def run_sweep(records, algorithms, windows, task, params=None, k=5, grouping=Grouping.PATIENT,
              minority_fraction=0.35, seed=0, aggregate='mean', include_timestamp=True, n_jobs=1,
              tensorboard_dir=None):
    """Cross-validate every (algorithm, window) cell; cells that cannot be evaluated are listed as skipped."""
    algorithms = [Algorithm(a) for a in algorithms]
    params = params if params is not None else HyperParams()
    jobs = []
    for window in windows:
        instances = build_dataset(records, window, task, include_timestamp)
        for algorithm in algorithms:
            jobs.append(delayed(_cell)(instances, algorithm, window, params, k, grouping, minority_fraction,
                                       seed, aggregate))
    results = Parallel(n_jobs=n_jobs)(jobs)
    report = SweepReport(task=str(getattr(task, 'value', task)), seed=seed)
    for row, skipped in results:
        if row is not None:
            report.rows.append(row)
        else:
            report.skipped.append(skipped)
            logger.warning(f"skipped {skipped['algorithm']} {skipped['window']}: {skipped['reason']}")
    if tensorboard_dir is not None and SummaryWriter is not None:
        writer = SummaryWriter(tensorboard_dir)
        for row in report.rows:
            for m in ('f_measure', 'accuracy', 'roc_area'):
                if row[m] is not None:
                    writer.add_scalar(f"{row['algorithm']}/{m}", row[m], global_step=int(row['window_end']))
        writer.close()
    return report


# final model / prediction #######################################################

def train_final_model(instances, algorithm, params=None, seed=0, minority_fraction=0.35, task=None,
                      include_timestamp=True, cleaning=None):
    """Balance, standardize and fit on all instances; the model file carries everything needed to predict."""
    if not instances:
        raise EmptyData('no instances to train on')
    params = params if params is not None else HyperParams()
    algorithm = Algorithm(algorithm)
    with util.stage('balance'):
        balanced = balance(instances, minority_fraction, seed)
    X, y, _ = to_matrix(balanced)
    schema = balanced[0].schema
    window = balanced[0].window
    with util.stage('standardize'):
        std = fit_standardizer_matrix(X, schema)
        Z = apply_standardizer_matrix(X, std, schema.hash)
    with util.stage('fit'):
        estimator = make_estimator(algorithm, params).fit(Z, y, seed=seed, obs_per_instance=window.obs_per_instance)
    predictions = estimator.predict(Z)
    metadata = {'task': str(getattr(task, 'value', task)) if task is not None else None,
                'window': window.flag, 'include_timestamp': include_timestamp,
                'schema': schema.to_dict(), 'standardizer': std.to_dict(),
                'cleaning': dict(cleaning or {}),
                'train_predictions': [{'patient_id': inst.patient_id, 'start_minute': inst.start_minute,
                                       'label': int(inst.label), 'prediction': int(p)}
                                      for inst, p in zip(balanced, predictions)]}
    return TrainedModel(algorithm, estimator, schema.hash, params, seed, metadata)


def predict_records(model, records, n_jobs=1):
    """Score every eligible window of the (raw) records with MODEL, in admission-time order.

    Records are cleaned with the model's cleaning settings, cut into instances with
    its window, standardized with its embedded standardizer and scored.
    """
    meta = model.metadata
    window = WindowSpec.parse(meta['window'])
    schema = FeatureSchema.from_dict(meta['schema'])
    if schema.hash != model.schema_hash:
        raise SchemaMismatch(f"model file schema {schema.hash} does not match its hash {model.schema_hash}")
    cleaning = meta.get('cleaning', {})
    cleaned, _ = clean_records(records, cleaning.get('min_history', 10), cleaning.get('sigma_factor', 4.0),
                               n_jobs=n_jobs)
    instances = build_dataset(cleaned, window, meta['task'], meta.get('include_timestamp', True), n_jobs)
    if not instances:
        raise NoEligibleWindows(f"no patient has {window.obs_per_instance} contiguous complete observations "
                                f"in window {window.label}")
    admission = {r.patient_id: r.admission_slot for r in cleaned}
    instances.sort(key=lambda i: (admission[i.patient_id] + 60 * i.start_minute, i.patient_id))
    X, y, _ = to_matrix(instances)
    std = StandardizationParams.from_dict(meta['standardizer'])
    Z = apply_standardizer_matrix(X, std, instances[0].schema.hash)
    labels = model.predict(Z, instances[0].schema.hash)
    proba = model.predict_proba(Z, instances[0].schema.hash)
    return pd.DataFrame({'patient_id': [i.patient_id for i in instances],
                         'start_minute': [i.start_minute for i in instances],
                         'label': y, 'prediction': labels, 'probability': proba})


PERFORMANCE_ROWS = (('Sensitivity', 'sensitivity'), ('Specificity', 'specificity'), ('F-Measure', 'f_measure'),
                    ('Accuracy', 'accuracy'), ('ROC Area', 'roc_area'), ('PRC Area', 'prc_area'))


def performance_table(named_vectors):
    """Metrics down, algorithms across, with the summary average as the last row."""
    data = {name: [getattr(mv, attr) for _, attr in PERFORMANCE_ROWS] + [mv.average]
            for name, mv in named_vectors.items()}
    frame = pd.DataFrame(data, index=[title for title, _ in PERFORMANCE_ROWS] + ['Avg'], dtype=float)
    return frame.round(4)
