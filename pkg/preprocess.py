"""Cleaning (outlier replacement, imputation) and z-score standardization."""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from joblib import Parallel, delayed

from errors import EmptyData, SchemaMismatch
from ingest import MISSING, VARIABLES, Observation

logger = logging.getLogger(__name__)

CATEGORICAL_VARIABLES = ('RE',)
NUMERIC_VARIABLES = tuple(v for v in VARIABLES if v not in CATEGORICAL_VARIABLES)


def _is_missing(x):
    return x is MISSING or (isinstance(x, float) and math.isnan(x))


@dataclass
class CleaningReport:
    outliers: Dict[str, int] = field(default_factory=dict)
    imputed: Dict[str, int] = field(default_factory=dict)
    locf: Dict[str, int] = field(default_factory=dict)
    # variables left entirely MISSING for at least one patient
    unrecoverable: List[str] = field(default_factory=list)

    def add(self, variable, outliers=0, imputed=0, locf=0):
        self.outliers[variable] = self.outliers.get(variable, 0) + outliers
        self.imputed[variable] = self.imputed.get(variable, 0) + imputed
        self.locf[variable] = self.locf.get(variable, 0) + locf
        return self

    def merge(self, other):
        for v in set(other.outliers) | set(other.imputed) | set(other.locf):
            self.add(v, other.outliers.get(v, 0), other.imputed.get(v, 0), other.locf.get(v, 0))
        for v in other.unrecoverable:
            if v not in self.unrecoverable:
                self.unrecoverable.append(v)
        return self

    @property
    def total_outliers(self):
        return sum(self.outliers.values())

    def to_dict(self):
        return {'outliers': dict(sorted(self.outliers.items())),
                'imputed': dict(sorted(self.imputed.items())),
                'locf': dict(sorted(self.locf.items())),
                'unrecoverable': sorted(self.unrecoverable)}


class RunningMoments(object):
    """Welford running mean / population variance."""

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self.m2 = 0.0

    def update(self, x):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    @property
    def std(self):
        if self.count == 0:
            return 0.0
        return math.sqrt(max(self.m2, 0.0) / self.count)


def clean_numeric_series(series, min_history=10, sigma_factor=4.0, variable='value'):
    """Streaming outlier replacement and mean imputation for one numeric series.

    A value x is replaced by the running mean when |x - mean| >= sigma_factor * std,
    as long as at least `min_history` values precede it and std > 0. MISSING values
    take the running mean, or stay MISSING while there is no history. Every emitted
    value (kept, replaced or imputed) joins the running moments, so cleaning an
    already-clean series returns it unchanged.
    The same feedback shrinks the running std during a long MISSING run (each
    imputed value sits on the mean), so ordinary values right after a long gap
    are more likely to be replaced.
    """
    report = CleaningReport().add(variable)
    moments = RunningMoments()
    out = []
    for x in series:
        if _is_missing(x):
            if moments.count == 0:
                out.append(MISSING)
                continue
            y = moments.mean
            report.imputed[variable] += 1
        else:
            y = float(x)
            std = moments.std
            if moments.count >= min_history and std > 0 and abs(y - moments.mean) >= sigma_factor * std:
                y = moments.mean
                report.outliers[variable] += 1
        out.append(y)
        moments.update(y)
    if moments.count == 0 and len(out) > 0:
        report.unrecoverable.append(variable)
    return out, report


def _valid_code(x):
    if _is_missing(x):
        return False
    x = float(x)
    return math.isfinite(x) and x.is_integer() and x >= 0


def impute_categorical_series(series, variable='RE'):
    """Last-value carry-forward for a categorical code series; a leading gap takes the first valid code."""
    report = CleaningReport().add(variable)
    first = next((float(x) for x in series if _valid_code(x)), None)
    if first is None:
        if len(series) > 0:
            report.unrecoverable.append(variable)
        return list(series), report
    out = []
    last = first
    for x in series:
        if _valid_code(x):
            last = float(x)
        else:
            report.locf[variable] += 1
        out.append(last)
    return out, report


def clean_record(record, min_history=10, sigma_factor=4.0):
    """Clean every variable of one PatientRecord; returns (new record, report)."""
    report = CleaningReport()
    columns = {}
    for v in VARIABLES:
        series = [o.values.get(v, MISSING) for o in record.observations]
        if v in CATEGORICAL_VARIABLES:
            cleaned, r = impute_categorical_series(series, variable=v)
        else:
            cleaned, r = clean_numeric_series(series, min_history, sigma_factor, variable=v)
        columns[v] = cleaned
        report.merge(r)
    observations = tuple(Observation(o.timestamp, {v: columns[v][i] for v in VARIABLES})
                         for i, o in enumerate(record.observations))
    return dataclasses.replace(record, observations=observations), report


def clean_records(records, min_history=10, sigma_factor=4.0, n_jobs=1):
    results = Parallel(n_jobs=n_jobs)(delayed(clean_record)(r, min_history, sigma_factor) for r in records)
    report = CleaningReport()
    cleaned = []
    for record, r in results:
        cleaned.append(record)
        report.merge(r)
    logger.info(f"cleaned {len(cleaned)} records, {report.total_outliers} outliers replaced")
    if report.unrecoverable:
        logger.warning(f"variables with no usable value for some patient: {sorted(report.unrecoverable)}")
    return cleaned, report


# standardization ################################################################

@dataclass(frozen=True)
class StandardizationParams:
    schema_hash: str
    columns: Tuple[int, ...]
    mean: Tuple[float, ...]
    std: Tuple[float, ...]
    fitted_on: int
    degenerate: Tuple[str, ...] = ()

    def to_dict(self):
        return {'schema_hash': self.schema_hash, 'columns': list(self.columns), 'mean': list(self.mean),
                'std': list(self.std), 'fitted_on': self.fitted_on, 'degenerate': list(self.degenerate)}

    @classmethod
    def from_dict(cls, d):
        return cls(d['schema_hash'], tuple(d['columns']), tuple(d['mean']), tuple(d['std']),
                   d['fitted_on'], tuple(d.get('degenerate', ())))


def fit_standardizer_matrix(X, schema):
    """Population moments of the numeric (non-categorical) columns of X."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyData('cannot fit a standardizer on an empty training set')
    if X.shape[1] != len(schema.names):
        raise SchemaMismatch(f"matrix has {X.shape[1]} columns, schema has {len(schema.names)}")
    columns = tuple(int(j) for j in np.flatnonzero(~np.asarray(schema.categorical, dtype=bool)))
    mean = X[:, columns].mean(axis=0)
    std = X[:, columns].std(axis=0)
    degenerate = tuple(schema.names[j] for j, s in zip(columns, std) if s == 0)
    if degenerate:
        logger.warning(f"degenerate features pass through unscaled: {list(degenerate)}")
    return StandardizationParams(schema.hash, columns, tuple(float(m) for m in mean),
                                 tuple(float(s) for s in std), int(X.shape[0]), degenerate)


def apply_standardizer_matrix(X, params, schema_hash=None):
    if schema_hash is not None and schema_hash != params.schema_hash:
        raise SchemaMismatch(f"standardizer fitted on schema {params.schema_hash}, got {schema_hash}")
    Z = np.array(X, dtype=np.float64, copy=True)
    if Z.ndim != 2 or (Z.shape[0] and max(params.columns, default=-1) >= Z.shape[1]):
        raise SchemaMismatch('matrix does not have the standardized columns')
    cols = np.asarray(params.columns, dtype=np.intp)
    mean = np.asarray(params.mean)
    std = np.asarray(params.std)
    live = std > 0
    Z[:, cols[live]] = (Z[:, cols[live]] - mean[live]) / std[live]
    return Z


def invert_standardizer_matrix(Z, params):
    X = np.array(Z, dtype=np.float64, copy=True)
    cols = np.asarray(params.columns, dtype=np.intp)
    mean = np.asarray(params.mean)
    std = np.asarray(params.std)
    live = std > 0
    X[:, cols[live]] = X[:, cols[live]] * std[live] + mean[live]
    return X


def _check_schema(instances):
    schema = instances[0].schema
    for inst in instances:
        if inst.schema.hash != schema.hash:
            raise SchemaMismatch(f"instances mix schemas {schema.hash} and {inst.schema.hash}")
    return schema


def _stack(instances):
    return np.stack([np.asarray(i.features, dtype=np.float64) for i in instances])


def fit_standardizer(training_instances):
    if len(training_instances) == 0:
        raise EmptyData('cannot fit a standardizer on an empty training set')
    schema = _check_schema(training_instances)
    return fit_standardizer_matrix(_stack(training_instances), schema)


def apply_standardizer(instances, params):
    """z = (x - mean) / std on numeric features; categorical codes and labels are untouched."""
    if len(instances) == 0:
        return []
    schema = _check_schema(instances)
    Z = apply_standardizer_matrix(_stack(instances), params, schema.hash)
    return [dataclasses.replace(inst, features=z) for inst, z in zip(instances, Z)]


def invert_standardizer(instances, params):
    if len(instances) == 0:
        return []
    schema = _check_schema(instances)
    if schema.hash != params.schema_hash:
        raise SchemaMismatch(f"standardizer fitted on schema {params.schema_hash}, got {schema.hash}")
    X = invert_standardizer_matrix(_stack(instances), params)
    return [dataclasses.replace(inst, features=x) for inst, x in zip(instances, X)]
