"""Monitor-row ingestion.

The monitoring center exports one row per measured variable:

    patient_id,timestamp,variable,value,unit

Rows sharing a patient and a 30 s grid slot are assembled into one Observation,
and observations are joined with the label table into PatientRecords.
"""
import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import LabelConflict, MalformedLine, UnknownVariable

logger = logging.getLogger(__name__)

VARIABLES = ('RE', 'VE', 'CF', 'BF', 'Perf', 'SpO2', 'ST_II')
UNITS = {'RE': 'code', 'VE': '/min', 'CF': 'bpm', 'BF': 'rpm', 'Perf': 'PI', 'SpO2': '%', 'ST_II': 'mm'}
MISSING = None
CADENCE_SECONDS = 30

ROWS_HEADER = ('patient_id', 'timestamp', 'variable', 'value', 'unit')
LABELS_HEADER = ('patient_id', 'age', 'gender', 'admission', 'stroke_type',
                 'exitus', 'exitus_time', 'recurrence', 'recurrence_time')


class Gender(str, enum.Enum):
    M = 'M'
    F = 'F'


class StrokeType(str, enum.Enum):
    ISCHEMIC = 'ISCHEMIC'
    HEMORRHAGIC = 'HEMORRHAGIC'


def parse_timestamp(text):
    """ISO-8601 -> aware UTC datetime at second resolution (naive input is read as UTC)."""
    text = text.strip()
    if text.endswith('Z') or text.endswith('z'):
        text = text[:-1] + '+00:00'
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(ts):
    return ts.astimezone(timezone.utc).strftime('%Y-%m-%dT%H:%M:%SZ')


def epoch_seconds(ts):
    return int(ts.timestamp())


def from_epoch(seconds):
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc)


def grid_slot(ts):
    """Epoch seconds of the start of the 30 s grid slot holding TS."""
    return epoch_seconds(ts) // CADENCE_SECONDS * CADENCE_SECONDS


def format_value(value):
    """Shortest text that parses back to the same float; integral values drop the '.0'."""
    if value is MISSING:
        return ''
    value = float(value)
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class MonitorRow:
    patient_id: str
    timestamp: datetime
    variable: str
    value: Optional[float]
    unit: str


@dataclass(frozen=True)
class Observation:
    timestamp: datetime
    values: Dict[str, Optional[float]]

    @property
    def complete(self):
        return all(self.values.get(v) is not MISSING for v in VARIABLES)

    def vector(self):
        """Values in VARIABLES order, NaN where missing."""
        return np.array([np.nan if self.values.get(v) is MISSING else self.values[v] for v in VARIABLES],
                        dtype=np.float64)


@dataclass(frozen=True)
class StrokeLabels:
    stroke_type: StrokeType
    exitus: bool
    exitus_time: Optional[datetime] = None
    recurrence: bool = False
    recurrence_time: Optional[datetime] = None

    def conflicts(self):
        """Reason the time fields contradict the flags, or None."""
        if self.exitus != (self.exitus_time is not None):
            return 'exitus_time must be present iff exitus'
        if self.recurrence != (self.recurrence_time is not None):
            return 'recurrence_time must be present iff recurrence'
        return None


@dataclass(frozen=True)
class LabelRow:
    patient_id: str
    age: int
    gender: Gender
    admission: datetime
    labels: StrokeLabels


@dataclass(frozen=True)
class PatientRecord:
    patient_id: str
    age: int
    gender: Gender
    admission: datetime
    observations: Tuple[Observation, ...]
    labels: StrokeLabels
    # (index of the observation after the gap, gap length in seconds)
    gaps: Tuple[Tuple[int, int], ...] = ()

    @property
    def admission_slot(self):
        return grid_slot(self.admission)

    def minutes_since_admission(self, observation):
        """Offset on the 30 s grid: the slot holding the admission instant is minute 0."""
        return (epoch_seconds(observation.timestamp) - self.admission_slot) / 60.0


@dataclass
class IngestReport:
    missing_labels: List[str] = field(default_factory=list)
    missing_observations: List[str] = field(default_factory=list)
    dropped_before_admission: int = 0

    def to_dict(self):
        return {'missing_labels': list(self.missing_labels),
                'missing_observations': list(self.missing_observations),
                'dropped_before_admission': self.dropped_before_admission}


# rows ###########################################################################

def iter_rows(text_stream):
    reader = csv.reader(text_stream)
    header = next(reader, None)
    if header is None:
        return
    if tuple(h.strip() for h in header) != ROWS_HEADER:
        raise MalformedLine(1, f"expected header {','.join(ROWS_HEADER)}")
    for line_no, fields in enumerate(reader, start=2):
        if not fields:
            continue
        if len(fields) != len(ROWS_HEADER):
            raise MalformedLine(line_no, f"expected {len(ROWS_HEADER)} columns, got {len(fields)}")
        patient_id, timestamp, variable, value, unit = fields
        try:
            ts = parse_timestamp(timestamp)
        except ValueError:
            raise MalformedLine(line_no, f"unparseable timestamp {timestamp!r}")
        if variable not in VARIABLES:
            raise UnknownVariable(variable)
        if value.strip() == '':
            number = MISSING
        else:
            try:
                number = float(value)
            except ValueError:
                raise MalformedLine(line_no, f"unparseable value {value!r}")
            if not math.isfinite(number):
                raise MalformedLine(line_no, f"non-finite value {value!r}")
        yield MonitorRow(patient_id, ts, variable, number, unit)


def parse_rows(text_stream):
    """Parse the rows CSV into MonitorRows, in file order."""
    return list(iter_rows(text_stream))


def serialize_rows(rows, text_stream):
    writer = csv.writer(text_stream, lineterminator='\n')
    writer.writerow(ROWS_HEADER)
    for row in rows:
        writer.writerow([row.patient_id, format_timestamp(row.timestamp), row.variable,
                         format_value(row.value), row.unit])


def assemble_observations(rows):
    """Group rows by (patient, 30 s grid slot) into time-ordered Observations.

    A variable absent from a slot is MISSING; a repeated (patient, slot, variable)
    keeps the last occurrence.
    """
    slots = {}
    duplicates = 0
    for row in rows:
        bucket = grid_slot(row.timestamp)
        values = slots.setdefault((row.patient_id, bucket), {})
        if row.variable in values:
            duplicates += 1
        values[row.variable] = row.value
    if duplicates:
        logger.warning(f"{duplicates} duplicate (patient, timestamp, variable) rows, kept the last occurrence")

    per_patient = {}
    for (patient_id, bucket) in sorted(slots):
        values = slots[(patient_id, bucket)]
        obs = Observation(from_epoch(bucket),
                          {v: values.get(v, MISSING) for v in VARIABLES})
        per_patient.setdefault(patient_id, []).append(obs)
    return per_patient


# labels #########################################################################

def _parse_flag(text, line_no, name):
    if text not in ('0', '1'):
        raise MalformedLine(line_no, f"{name} must be 0 or 1, got {text!r}")
    return text == '1'


def _parse_optional_time(text, line_no, name):
    if text.strip() == '':
        return None
    try:
        return parse_timestamp(text)
    except ValueError:
        raise MalformedLine(line_no, f"unparseable {name} {text!r}")


def read_labels(text_stream):
    """Parse the labels CSV into {patient_id: LabelRow}.

    Time-field consistency is checked later by build_patient_records.
    """
    table = pd.read_csv(text_stream, dtype=str, keep_default_na=False)
    if tuple(table.columns) != LABELS_HEADER:
        raise MalformedLine(1, f"expected header {','.join(LABELS_HEADER)}")
    out = {}
    for i, rec in enumerate(table.to_dict('records')):
        line_no = i + 2
        try:
            age = int(rec['age'])
            gender = Gender(rec['gender'])
            admission = parse_timestamp(rec['admission'])
            stroke_type = StrokeType(rec['stroke_type'])
        except ValueError as e:
            raise MalformedLine(line_no, str(e))
        if age < 0:
            raise MalformedLine(line_no, f"negative age {age}")
        labels = StrokeLabels(stroke_type=stroke_type,
                              exitus=_parse_flag(rec['exitus'], line_no, 'exitus'),
                              exitus_time=_parse_optional_time(rec['exitus_time'], line_no, 'exitus_time'),
                              recurrence=_parse_flag(rec['recurrence'], line_no, 'recurrence'),
                              recurrence_time=_parse_optional_time(rec['recurrence_time'], line_no,
                                                                   'recurrence_time'))
        out[rec['patient_id']] = LabelRow(rec['patient_id'], age, gender, admission, labels)
    return out


def write_labels(records, text_stream):
    writer = csv.writer(text_stream, lineterminator='\n')
    writer.writerow(LABELS_HEADER)
    for r in records:
        lab = r.labels
        writer.writerow([r.patient_id, r.age, r.gender.value, format_timestamp(r.admission),
                         lab.stroke_type.value, int(lab.exitus),
                         format_timestamp(lab.exitus_time) if lab.exitus_time else '',
                         int(lab.recurrence),
                         format_timestamp(lab.recurrence_time) if lab.recurrence_time else ''])


# records ########################################################################

def find_gaps(observations):
    gaps = []
    for i in range(1, len(observations)):
        dt = epoch_seconds(observations[i].timestamp) - epoch_seconds(observations[i - 1].timestamp)
        if dt > CADENCE_SECONDS:
            gaps.append((i, dt))
    return tuple(gaps)


def build_patient_records(observations, label_table):
    """Join assembled observations with the label table.

    Returns (records, IngestReport); patients present on only one side are listed
    in the report instead of being silently dropped.
    """
    report = IngestReport()
    records = []
    for patient_id in sorted(set(observations) | set(label_table)):
        if patient_id not in label_table:
            report.missing_labels.append(patient_id)
            continue
        if patient_id not in observations:
            report.missing_observations.append(patient_id)
            continue
        row = label_table[patient_id]
        reason = row.labels.conflicts()
        if reason is not None:
            raise LabelConflict(patient_id, reason)
        # a slot is kept when it ends after admission; observations carry their slot start
        first_slot = grid_slot(row.admission)
        obs = [o for o in observations[patient_id] if epoch_seconds(o.timestamp) >= first_slot]
        report.dropped_before_admission += len(observations[patient_id]) - len(obs)
        records.append(PatientRecord(patient_id=patient_id, age=row.age, gender=row.gender,
                                     admission=row.admission, observations=tuple(obs),
                                     labels=row.labels, gaps=find_gaps(obs)))
    if report.missing_labels:
        logger.warning(f"{len(report.missing_labels)} patients have observations but no label row")
    if report.missing_observations:
        logger.warning(f"{len(report.missing_observations)} patients have a label row but no observations")
    if report.dropped_before_admission:
        logger.warning(f"dropped {report.dropped_before_admission} observations recorded before admission")
    return records, report


def records_to_rows(records):
    """Flatten records back into canonical rows (patient, time, variable order)."""
    rows = []
    for r in sorted(records, key=lambda rec: rec.patient_id):
        for obs in r.observations:
            for v in VARIABLES:
                rows.append(MonitorRow(r.patient_id, obs.timestamp, v, obs.values.get(v, MISSING), UNITS[v]))
    return rows


def load_records(rows_path, labels_path):
    """Read both CSV files and return (records, IngestReport)."""
    with open(rows_path, newline='', encoding='utf-8') as f:
        rows = parse_rows(f)
    with open(labels_path, newline='', encoding='utf-8') as f:
        labels = read_labels(f)
    return build_patient_records(assemble_observations(rows), labels)
