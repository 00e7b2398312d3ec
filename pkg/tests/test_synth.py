import io

import numpy as np
import pytest

import synth
from conftest import NOISY_REGIME
from data import Task, WindowSpec, build_dataset, to_matrix
from errors import UnsupportedRegime
from evaluate import CrossValidator
from ingest import load_records, records_to_rows, serialize_rows
from models import Algorithm, ForestParams, HyperParams, KNNParams
from preprocess import clean_records


def rows_text(records):
    out = io.StringIO()
    serialize_rows(records_to_rows(records), out)
    return out.getvalue()


def test_same_seed_same_cohort():
    config = synth.SynthConfig(n_patients=10, seed=42, duration_minutes=10)
    assert rows_text(synth.generate_cohort(config)) == rows_text(synth.generate_cohort(config))
    other = synth.SynthConfig(n_patients=10, seed=43, duration_minutes=10)
    assert rows_text(synth.generate_cohort(other)) != rows_text(synth.generate_cohort(config))


def test_parallel_generation_is_identical():
    config = synth.SynthConfig(n_patients=12, seed=1, duration_minutes=5)
    assert synth.generate_cohort(config) == synth.generate_cohort(config, n_jobs=2)


def test_clean_cohort_needs_no_replacements():
    records = synth.generate_cohort(synth.SynthConfig(n_patients=20, seed=3))
    cleaned, report = clean_records(records)
    assert report.total_outliers == 0
    assert sum(report.imputed.values()) == 0
    assert cleaned == records


def test_injected_outliers_and_gaps_are_cleaned():
    config = synth.SynthConfig(n_patients=20, seed=3, outlier_rate=0.02, missing_rate=0.05)
    _, report = clean_records(synth.generate_cohort(config))
    assert report.total_outliers > 0
    assert sum(report.imputed.values()) > 0


def test_cohort_shape_and_labels():
    config = synth.preset('exitus', n_patients=50, positive_count=10, duration_minutes=30)
    records = synth.generate_cohort(config)
    assert len(records) == 50
    assert sum(r.labels.exitus for r in records) == 10
    assert all(len(r.observations) == 60 for r in records)
    assert all(r.gaps == () for r in records)
    assert all(r.observations[0].timestamp == r.admission for r in records)


def test_presets():
    assert synth.preset('diagnosis').n_patients == 548
    assert synth.preset('diagnosis').positive_count == 80
    assert synth.preset('exitus').positive_count == 43
    assert synth.preset('recurrence').positive_count == 34
    with pytest.raises(ValueError):
        synth.SynthConfig(class_prior=1.0)
    with pytest.raises(ValueError):
        synth.SynthConfig(noise_std=0)


def test_class_frequency_matches_prior():
    config = synth.SynthConfig(n_patients=10000, class_prior=0.15, seed=5)
    freq = synth.assign_classes(config).mean()
    assert abs(freq - 0.15) < 3 * np.sqrt(0.15 * 0.85 / 10000)


def test_written_cohort_reads_back(tmp_path):
    records = synth.generate_cohort(synth.SynthConfig(n_patients=5, seed=8, duration_minutes=5))
    rows, labels = str(tmp_path / 'rows.csv'), str(tmp_path / 'labels.csv')
    synth.write_cohort(records, rows, labels)
    again, report = load_records(rows, labels)
    assert again == sorted(records, key=lambda r: r.patient_id)
    assert report.missing_labels == [] and report.missing_observations == []


def test_bayes_error_closed_form():
    assert synth.bayes_error(synth.SynthConfig(ar=0.0, delta=(0.0,) * 6)) == 0.5
    config = synth.SynthConfig(ar=0.0, delta=(2.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    assert synth.bayes_error(config, obs_per_instance=1) == pytest.approx(0.15866, abs=1e-5)
    assert synth.bayes_error(synth.SynthConfig(ar=0.0, delta=(20.0,) * 6)) < 1e-12


def test_bayes_error_needs_iid_regime():
    with pytest.raises(UnsupportedRegime):
        synth.bayes_error(synth.SynthConfig(ar=0.8))


def test_monte_carlo_agrees_with_closed_form():
    config = synth.SynthConfig(ar=0.0, delta=(0.4, 0.0, 0.3, 0.0, 0.0, 0.2))
    exact = synth.bayes_error(config, obs_per_instance=5)
    estimate, se = synth.bayes_error_monte_carlo(config, obs_per_instance=5, n_samples=200000, seed=1)
    assert abs(estimate - exact) < 3 * se


def test_bayes_rule_on_generated_instances():
    config = synth.SynthConfig(n_patients=400, class_prior=0.5, ar=0.0, delta=(0.3,) * 6, duration_minutes=5,
                               seed=2)
    records, _ = clean_records(synth.generate_cohort(config))
    instances = build_dataset(records, WindowSpec(5, 0, 5), Task.DIAGNOSIS)
    X, y, _ = to_matrix(instances)
    blocks = X[:, :35].reshape(-1, 5, 7)
    wrong = synth.bayes_decision(config, blocks) != y
    exact = synth.bayes_error(config)
    se = np.sqrt(exact * (1 - exact) / len(y))
    assert abs(wrong.mean() - exact) < 3 * se + 0.01


def test_operating_point_at_equal_prior():
    config = synth.SynthConfig(ar=0.0, delta=(1.0, 0.0, 0.0, 0.0, 0.0, 0.0))
    point = synth.bayes_operating_point(config, obs_per_instance=1, positive_fraction=0.5)
    assert point['accuracy'] == pytest.approx(1 - synth.bayes_error(config, obs_per_instance=1))
    assert point['sensitivity'] == pytest.approx(point['specificity'])


def test_default_cohort_is_nearly_separable():
    point = synth.bayes_operating_point(synth.preset('diagnosis'), obs_per_instance=5)
    assert point['f_measure'] > 0.99


def test_noisy_regime_leaves_room_below_perfect():
    config = synth.SynthConfig(**NOISY_REGIME)
    point = synth.bayes_operating_point(config, 5, 0.35)
    assert 0.85 <= point['f_measure'] <= 0.9


@pytest.mark.slow
def test_no_signal_means_chance_accuracy():
    config = synth.SynthConfig(n_patients=600, positive_count=300, delta=(0.0,) * 6, duration_minutes=15, seed=11)
    records, _ = clean_records(synth.generate_cohort(config, n_jobs=-1), n_jobs=-1)
    instances = build_dataset(records, WindowSpec(5, 0, 15), Task.DIAGNOSIS)
    params = HyperParams(forest=ForestParams(n_estimators=50, n_jobs=-1), knn=KNNParams(index='brute'))
    for algorithm in (Algorithm.GBM, Algorithm.FOREST, Algorithm.KNN):
        result = CrossValidator(algorithm, params, minority_fraction=0.5, seed=11).run(instances)
        assert 0.45 <= result.aggregate.accuracy <= 0.55, algorithm
