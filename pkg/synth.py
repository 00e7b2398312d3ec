"""Seeded synthetic cohorts with a known Bayes-optimal classifier.

Every numeric variable v of a patient of class c is

    base_v + scale_v * (delta_v * c + noise_std * e_t)

with e_t a stationary AR(1) process of unit variance. RE is a constant
per-patient code. Class 1 is the positive class of the configured task.
"""
import io
import logging
from dataclasses import dataclass
from datetime import timedelta
from typing import Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import norm

import files
import util
from data import Task
from errors import UnsupportedRegime
from ingest import (CADENCE_SECONDS, MISSING, VARIABLES, Gender, Observation, PatientRecord, StrokeLabels,
                    StrokeType, find_gaps, parse_timestamp, records_to_rows, serialize_rows, write_labels)
from preprocess import NUMERIC_VARIABLES, clean_numeric_series

logger = logging.getLogger(__name__)

# (base, scale) per numeric variable
BASELINES = {'VE': (2.0, 1.0), 'CF': (80.0, 10.0), 'BF': (16.0, 3.0), 'Perf': (2.0, 0.5),
             'SpO2': (96.0, 1.5), 'ST_II': (0.0, 0.5)}
DEFAULT_DELTA = (0.0, 2.5, 2.5, 0.0, 2.5, 2.5)
N_RE_CODES = 3
OUTLIER_MAGNITUDE = 12.0

# (n_patients, positives)
PRESETS = {'diagnosis': (548, 80), 'exitus': (504, 43), 'recurrence': (500, 34)}


@dataclass(frozen=True)
class SynthConfig:
    n_patients: int = 100
    class_prior: float = 0.15
    # exact number of positive patients; overrides class_prior when set
    positive_count: Optional[int] = None
    # per-class mean offset in units of scale, in NUMERIC_VARIABLES order
    delta: Tuple[float, ...] = DEFAULT_DELTA
    noise_std: float = 1.0
    ar: float = 0.8
    duration_minutes: float = 60.0
    outlier_rate: float = 0.0
    missing_rate: float = 0.0
    task: str = 'diagnosis'
    seed: int = 0
    start: str = '2020-01-01T00:00:00Z'

    def __post_init__(self):
        if not 0 < self.class_prior < 1:
            raise ValueError(f"class prior must be in (0, 1), got {self.class_prior}")
        if self.noise_std <= 0:
            raise ValueError(f"noise std must be > 0, got {self.noise_std}")
        if not -1 < self.ar < 1:
            raise ValueError(f"AR coefficient must be in (-1, 1), got {self.ar}")
        for name in ('outlier_rate', 'missing_rate'):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must be in [0, 1), got {getattr(self, name)}")
        if len(self.delta) != len(NUMERIC_VARIABLES):
            raise ValueError(f"delta needs {len(NUMERIC_VARIABLES)} components")
        if self.positive_count is not None and not 0 <= self.positive_count <= self.n_patients:
            raise ValueError(f"positive count {self.positive_count} outside [0, {self.n_patients}]")
        Task(self.task)

    @property
    def n_observations(self):
        return int(self.duration_minutes * 60 // CADENCE_SECONDS)

    @property
    def prior(self):
        if self.positive_count is not None:
            return self.positive_count / self.n_patients
        return self.class_prior


def preset(name, **overrides):
    n_patients, positives = PRESETS[name]
    return SynthConfig(**{'n_patients': n_patients, 'positive_count': positives, 'task': name, **overrides})


def ar1_series(rng, n, ar):
    """Stationary unit-variance AR(1) noise of length n."""
    e = np.empty(n)
    if n == 0:
        return e
    innovations = rng.standard_normal(n)
    e[0] = innovations[0]
    scale = np.sqrt(1.0 - ar * ar)
    for t in range(1, n):
        e[t] = ar * e[t - 1] + scale * innovations[t]
    return e


def _labels(config, cls, admission, rng):
    end = admission + timedelta(minutes=config.duration_minutes)
    task = Task(config.task)
    if task is Task.DIAGNOSIS:
        stroke = StrokeType.HEMORRHAGIC if cls else StrokeType.ISCHEMIC
        return StrokeLabels(stroke, exitus=False)
    stroke = StrokeType.HEMORRHAGIC if rng.random() < 0.15 else StrokeType.ISCHEMIC
    when = end + timedelta(minutes=int(rng.integers(60, 72 * 60)))
    if task is Task.EXITUS:
        return StrokeLabels(stroke, exitus=bool(cls), exitus_time=when if cls else None)
    return StrokeLabels(stroke, exitus=False, recurrence=bool(cls), recurrence_time=when if cls else None)


def _patient(config, index, cls, seed_seq):
    rng = np.random.default_rng(seed_seq)
    n = config.n_observations
    start = parse_timestamp(config.start)
    # admissions on the 30 s grid, spread over a year
    admission = start + timedelta(seconds=CADENCE_SECONDS * int(rng.integers(0, 365 * 24 * 120)))
    age = int(rng.integers(35, 95))
    gender = Gender.F if rng.random() < 0.5 else Gender.M
    re_code = float(rng.integers(0, N_RE_CODES))

    columns = {'RE': [re_code] * n}
    for v, delta in zip(NUMERIC_VARIABLES, config.delta):
        base, scale = BASELINES[v]
        z = delta * cls + config.noise_std * ar1_series(rng, n, config.ar)
        # settle through the cleaner so clean data is a fixed point of it
        settled, _ = clean_numeric_series(list(base + scale * z))
        column = list(settled)
        if config.outlier_rate > 0:
            hits = np.flatnonzero(rng.random(n) < config.outlier_rate)
            signs = rng.choice([-1.0, 1.0], size=len(hits))
            for t, s in zip(hits, signs):
                column[t] = base + scale * (delta * cls + s * OUTLIER_MAGNITUDE * config.noise_std)
        columns[v] = column
    if config.missing_rate > 0:
        for v in VARIABLES:
            drop = np.flatnonzero(rng.random(n) < config.missing_rate)
            for t in drop:
                columns[v][t] = MISSING

    observations = tuple(Observation(admission + timedelta(seconds=CADENCE_SECONDS * t),
                                     {v: columns[v][t] for v in VARIABLES}) for t in range(n))
    return PatientRecord(patient_id=f"P{index:05d}", age=age, gender=gender, admission=admission,
                         observations=observations, labels=_labels(config, cls, admission, rng),
                         gaps=find_gaps(observations))


def assign_classes(config):
    rng = util.rng_for(config.seed, 'synth-classes')
    if config.positive_count is not None:
        classes = np.zeros(config.n_patients, dtype=np.int64)
        classes[rng.permutation(config.n_patients)[:config.positive_count]] = 1
        return classes
    return (rng.random(config.n_patients) < config.class_prior).astype(np.int64)


def generate_cohort(config, n_jobs=1):
    """PatientRecords for the configured cohort; fully determined by config.seed."""
    classes = assign_classes(config)
    children = np.random.SeedSequence(util.substream(config.seed, 'synth')).spawn(config.n_patients)
    records = Parallel(n_jobs=n_jobs)(delayed(_patient)(config, i, int(c), s)
                                      for i, (c, s) in enumerate(zip(classes, children)))
    logger.info(f"generated {len(records)} patients, {int(classes.sum())} positive for {config.task}")
    return records


def write_cohort(records, rows_path, labels_path):
    rows = io.StringIO()
    serialize_rows(records_to_rows(records), rows)
    files.atomic_write(rows_path, rows.getvalue())
    labels = io.StringIO()
    write_labels(records, labels)
    files.atomic_write(labels_path, labels.getvalue())


# Bayes oracle ##################################################################

def ar1_correlation(n, ar):
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return ar ** lags.astype(np.float64)


def separation(config, obs_per_instance=5):
    """Mahalanobis distance between the class-conditional distributions of a W x 7 block."""
    R = ar1_correlation(obs_per_instance, config.ar)
    ones = np.ones(obs_per_instance)
    quad = float(ones @ np.linalg.solve(R, ones))
    return float(np.sqrt(quad * np.sum(np.square(config.delta))) / config.noise_std)


def bayes_error(config, obs_per_instance=5):
    """Equal-prior Bayes error Phi(-d / 2) in the i.i.d. regime (AR coefficient 0)."""
    if config.ar != 0:
        raise UnsupportedRegime('closed-form Bayes error needs AR coefficient 0; '
                                'use bayes_error_monte_carlo')
    return float(norm.cdf(-separation(config, obs_per_instance) / 2.0))


def _standardized(config, blocks):
    """(n, W, 6) standardized numeric values from (n, W, 7) raw blocks."""
    blocks = np.asarray(blocks, dtype=np.float64)
    cols = [VARIABLES.index(v) for v in NUMERIC_VARIABLES]
    base = np.asarray([BASELINES[v][0] for v in NUMERIC_VARIABLES])
    scale = np.asarray([BASELINES[v][1] for v in NUMERIC_VARIABLES])
    return (blocks[..., cols] - base) / scale


def log_likelihood_ratio(config, blocks):
    """log p(block | class 1) - log p(block | class 0) for raw (n, W, 7) or (W, 7) blocks."""
    z = _standardized(config, blocks)
    single = z.ndim == 2
    if single:
        z = z[None]
    w = z.shape[1]
    delta = np.asarray(config.delta)
    R = ar1_correlation(w, config.ar)
    # per variable: delta * 1' R^-1 (z - delta / 2) / sigma^2
    weights = np.linalg.solve(R, np.ones(w))
    centered = z - delta / 2.0
    llr = np.einsum('t,ntv,v->n', weights, centered, delta) / config.noise_std ** 2
    return llr[0] if single else llr


def bayes_decision(config, hemodynamic_block, positive_fraction=0.5):
    """Bayes rule at the given prior: 1 when the likelihood ratio beats (1 - pi) / pi."""
    threshold = np.log((1 - positive_fraction) / positive_fraction)
    return (log_likelihood_ratio(config, hemodynamic_block) > threshold).astype(np.int64)


def bayes_operating_point(config, obs_per_instance=5, positive_fraction=0.35):
    """Sensitivity, specificity, precision, F1 and accuracy of the Bayes rule at prior pi."""
    pi = positive_fraction
    d = separation(config, obs_per_instance)
    tau = np.log((1 - pi) / pi)
    if d == 0:
        tpr = fpr = float(tau < 0)
    else:
        tpr = float(norm.cdf((d * d / 2 - tau) / d))
        fpr = float(norm.cdf((-d * d / 2 - tau) / d))
    predicted_pos = pi * tpr + (1 - pi) * fpr
    precision = pi * tpr / predicted_pos if predicted_pos > 0 else 0.0
    f1 = 2 * precision * tpr / (precision + tpr) if precision + tpr > 0 else 0.0
    return {'sensitivity': tpr, 'specificity': 1 - fpr, 'precision': precision, 'f_measure': f1,
            'accuracy': pi * tpr + (1 - pi) * (1 - fpr)}


def sample_blocks(config, classes, obs_per_instance, rng):
    """Raw (n, W, 7) blocks for the given classes, RE fixed at code 0."""
    n = len(classes)
    blocks = np.zeros((n, obs_per_instance, len(VARIABLES)))
    L = np.linalg.cholesky(ar1_correlation(obs_per_instance, config.ar))
    for j, (v, delta) in enumerate(zip(NUMERIC_VARIABLES, config.delta)):
        base, scale = BASELINES[v]
        e = rng.standard_normal((n, obs_per_instance)) @ L.T
        blocks[:, :, VARIABLES.index(v)] = base + scale * (delta * classes[:, None] + config.noise_std * e)
    return blocks


def bayes_error_monte_carlo(config, obs_per_instance=5, n_samples=100000, seed=0):
    """(error, standard error) of the equal-prior Bayes rule on simulated blocks."""
    rng = util.rng_for(seed, 'bayes')
    classes = (rng.random(n_samples) < 0.5).astype(np.int64)
    blocks = sample_blocks(config, classes, obs_per_instance, rng)
    wrong = bayes_decision(config, blocks) != classes
    err = float(wrong.mean())
    return err, float(np.sqrt(err * (1 - err) / n_samples))
