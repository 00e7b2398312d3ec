"""Windowed instances, class balancing and K-fold plans."""
import enum
import hashlib
import json
import logging
import re
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

import files
import util
from errors import SingleClass, TooFewGroups
from ingest import CADENCE_SECONDS, VARIABLES, Gender, StrokeType, epoch_seconds

logger = logging.getLogger(__name__)

N_VARIABLES = len(VARIABLES)
MAX_OBS_PER_INSTANCE = 120


class Task(str, enum.Enum):
    DIAGNOSIS = 'diagnosis'
    EXITUS = 'exitus'
    RECURRENCE = 'recurrence'


class Grouping(str, enum.Enum):
    PATIENT = 'patient'
    INSTANCE = 'instance'


def task_label(labels, task):
    """Binary label of a patient for TASK (1 = HEMORRHAGIC / exitus / recurrence)."""
    task = Task(task)
    if task is Task.DIAGNOSIS:
        return int(labels.stroke_type is StrokeType.HEMORRHAGIC)
    if task is Task.EXITUS:
        return int(labels.exitus)
    return int(labels.recurrence)


@dataclass(frozen=True)
class WindowSpec:
    obs_per_instance: int = 5
    window_start: float = 0
    window_end: float = 30

    def __post_init__(self):
        if not 1 <= self.obs_per_instance <= MAX_OBS_PER_INSTANCE:
            raise ValueError(f"observations per instance must be in [1, {MAX_OBS_PER_INSTANCE}], "
                             f"got {self.obs_per_instance}")
        if not self.window_end > self.window_start:
            raise ValueError(f"window end {self.window_end} must exceed start {self.window_start}")
        if self.window_start < 0:
            raise ValueError(f"window start must be >= 0, got {self.window_start}")

    @classmethod
    def parse(cls, text):
        """'5x0-30' -> WindowSpec(5, 0, 30)."""
        m = re.fullmatch(r'\s*(\d+)x(\d+(?:\.\d+)?)-(\d+(?:\.\d+)?)\s*', text)
        if m is None:
            raise ValueError(f"window must look like WxSTART-END (e.g. 5x0-30), got {text!r}")
        return cls(int(m.group(1)), _num(m.group(2)), _num(m.group(3)))

    @property
    def flag(self):
        return f"{self.obs_per_instance}x{_fmt(self.window_start)}-{_fmt(self.window_end)}"

    @property
    def label(self):
        return f"{self.obs_per_instance}-({_fmt(self.window_start)},{_fmt(self.window_end)})"

    def contains(self, minutes):
        # half-open so that (0,30) holds exactly 60 half-minute slots
        return self.window_start <= minutes < self.window_end


def _num(text):
    value = float(text)
    return int(value) if value.is_integer() else value


def _fmt(value):
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def default_window_grid(obs_per_instance=5):
    ends = list(range(5, 121, 5)) + [180, 360, 540]
    return [WindowSpec(obs_per_instance, 0, t) for t in ends]


@dataclass(frozen=True)
class FeatureSchema:
    names: Tuple[str, ...]
    categorical: Tuple[bool, ...]

    @property
    def hash(self):
        blob = json.dumps({'names': list(self.names), 'categorical': list(self.categorical)})
        return hashlib.sha256(blob.encode('utf-8')).hexdigest()[:16]

    def __len__(self):
        return len(self.names)

    def to_dict(self):
        return {'names': list(self.names), 'categorical': list(self.categorical)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d['names']), tuple(bool(c) for c in d['categorical']))


def make_schema(obs_per_instance, task, include_timestamp=True):
    names, categorical = [], []
    for k in range(obs_per_instance):
        for v in VARIABLES:
            names.append(f"{v}@{k}")
            categorical.append(v == 'RE')
    names += ['age', 'gender']
    categorical += [False, True]
    if include_timestamp:
        names.append('minutes_since_admission')
        categorical.append(False)
    if Task(task) is not Task.DIAGNOSIS:
        names.append('stroke_type')
        categorical.append(True)
    return FeatureSchema(tuple(names), tuple(categorical))


@dataclass(frozen=True, eq=False)
class Instance:
    patient_id: str
    features: np.ndarray
    label: int
    window: WindowSpec
    schema: FeatureSchema
    start_minute: float = 0.0

    @property
    def series(self):
        """The W x 7 block of hemodynamic values, one row per observation."""
        w = self.window.obs_per_instance
        return np.asarray(self.features[:w * N_VARIABLES]).reshape(w, N_VARIABLES)


def build_instances(record, spec, task, include_timestamp=True):
    """Cut one cleaned record into non-overlapping runs of W contiguous complete observations.

    A missing 30 s slot or an incomplete observation breaks the run; leftovers
    shorter than W are dropped.
    """
    task = Task(task)
    schema = make_schema(spec.obs_per_instance, task, include_timestamp)
    label = task_label(record.labels, task)
    tail = [float(record.age), 0.0 if record.gender is Gender.M else 1.0]
    admission = record.admission_slot

    instances = []
    run = []
    prev = None
    for obs in record.observations:
        t = epoch_seconds(obs.timestamp)
        minutes = (t - admission) / 60.0
        if not spec.contains(minutes) or not obs.complete:
            run, prev = [], None
            continue
        if prev is not None and t - prev != CADENCE_SECONDS:
            run = []
        run.append((minutes, obs))
        prev = t
        if len(run) == spec.obs_per_instance:
            start_minute = run[0][0]
            block = np.concatenate([o.vector() for _, o in run])
            extra = list(tail)
            if include_timestamp:
                extra.append(start_minute)
            if task is not Task.DIAGNOSIS:
                extra.append(float(record.labels.stroke_type is StrokeType.HEMORRHAGIC))
            features = np.concatenate([block, np.asarray(extra, dtype=np.float64)])
            instances.append(Instance(record.patient_id, features, label, spec, schema, start_minute))
            run = []
    return instances


def build_dataset(records, spec, task, include_timestamp=True, n_jobs=1):
    per_patient = Parallel(n_jobs=n_jobs)(
        delayed(build_instances)(r, spec, task, include_timestamp) for r in records)
    instances = [inst for chunk in per_patient for inst in chunk]
    logger.debug(f"window {spec.label}: {len(instances)} instances from {len(records)} patients")
    return instances


def to_matrix(instances):
    """(X, y, patient ids) of a list of instances."""
    X = np.stack([i.features for i in instances]).astype(np.float64)
    y = np.asarray([i.label for i in instances], dtype=np.int64)
    groups = np.asarray([i.patient_id for i in instances], dtype=object)
    return X, y, groups


def balance(instances, minority_fraction=0.35, seed=0):
    """Undersample the majority class until the minority makes up `minority_fraction`.

    Keeps every minority instance and floor(n_min * (1 - f) / f) majority instances
    drawn without replacement; the input order of the survivors is preserved.
    """
    labels = np.asarray([i.label for i in instances], dtype=np.int64)
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) < 2:
        raise SingleClass(f"balancing needs two classes, got {classes.tolist()}")
    minority = classes[np.argmin(counts)]
    n_min = int(counts.min())
    target = int(np.floor(n_min * (1 - minority_fraction) / minority_fraction + 1e-9))
    majority_idx = np.flatnonzero(labels != minority)
    if len(majority_idx) <= target:
        return list(instances)
    rng = util.rng_for(seed, 'balance')
    keep = np.zeros(len(instances), dtype=bool)
    keep[labels == minority] = True
    keep[rng.choice(majority_idx, size=target, replace=False)] = True
    out = [inst for inst, k in zip(instances, keep) if k]
    logger.debug(f"balanced {len(instances)} -> {len(out)} instances ({n_min} minority)")
    return out


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignments: np.ndarray
    grouping: Grouping
    seed: int

    def folds(self):
        """Yield (train_indices, test_indices) per fold."""
        for f in range(self.k):
            yield np.flatnonzero(self.assignments != f), np.flatnonzero(self.assignments == f)


def kfold_split(instances, k=5, grouping=Grouping.PATIENT, seed=0):
    """Shuffle groups with the 'folds' substream and deal them round-robin into K folds."""
    grouping = Grouping(grouping)
    if grouping is Grouping.PATIENT:
        keys = [i.patient_id for i in instances]
    else:
        keys = list(range(len(instances)))
    groups = sorted(set(keys))
    if len(groups) < k:
        raise TooFewGroups(f"{len(groups)} {grouping.value} groups for {k} folds")
    order = util.rng_for(seed, 'folds').permutation(len(groups))
    fold_of = {groups[g]: pos % k for pos, g in enumerate(order)}
    assignments = np.asarray([fold_of[key] for key in keys], dtype=np.int64)
    return FoldPlan(k, assignments, grouping, seed)


def export_instances(instances, path):
    """Write `patient_id,label,f0..fN` CSV."""
    if not instances:
        files.write_table(path, [], columns=['patient_id', 'label'])
        return
    n = len(instances[0].features)
    frame = pd.DataFrame([i.features for i in instances], columns=[f"f{j}" for j in range(n)])
    frame.insert(0, 'label', [i.label for i in instances])
    frame.insert(0, 'patient_id', [i.patient_id for i in instances])
    files.write_table(path, frame)
