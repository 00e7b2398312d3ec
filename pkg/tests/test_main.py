import os

import pandas as pd
import pytest

import files
from main import main
from metrics import roc_auc

SMALL = ['--param', 'forest.n_estimators=10', '--param', 'gbm.n_estimators=10', '--param', 'gbm.max_depth=3']


def read(path):
    with open(path, encoding='utf-8') as f:
        return f.read()


@pytest.fixture(scope='module')
def cohort(tmp_path_factory):
    out = str(tmp_path_factory.mktemp('cohort'))
    assert main(['synth', '--out', out, '--seed', '7', '--n-patients', '30', '--positives', '8',
                 '--duration', '20']) == 0
    return out


def data_flags(cohort):
    return ['--rows', os.path.join(cohort, 'rows.csv'), '--labels', os.path.join(cohort, 'labels.csv')]


def test_synth_writes_cohort_and_oracle(cohort):
    summary = files.read_json(os.path.join(cohort, 'synth.json'))
    assert summary['config']['n_patients'] == 30
    assert 'bayes_error_stderr' in summary
    assert set(summary['bayes_operating_point']) >= {'f_measure', 'accuracy'}
    assert read(os.path.join(cohort, 'rows.csv')).startswith('patient_id,timestamp,variable,value,unit\n')


def test_synth_is_byte_identical(cohort, tmp_path):
    assert main(['synth', '--out', str(tmp_path), '--seed', '7', '--n-patients', '30', '--positives', '8',
                 '--duration', '20']) == 0
    for name in ('rows.csv', 'labels.csv', 'synth.json'):
        assert read(os.path.join(cohort, name)) == read(str(tmp_path / name))


def test_ingest(cohort, tmp_path):
    assert main(['ingest', '--out', str(tmp_path)] + data_flags(cohort)) == 0
    summary = files.read_json(str(tmp_path / 'ingest.json'))
    assert summary['patients'] == 30
    assert summary['instances'] == 30 * 8
    assert summary['cleaning']['outliers']['CF'] == 0
    assert len(pd.read_csv(str(tmp_path / 'instances.csv'))) == 240


def test_sweep_select_report(cohort, tmp_path):
    sweep_dir, select_dir, report_dir = (str(tmp_path / d) for d in ('sweep', 'select', 'report'))
    argv = ['sweep', '--out', sweep_dir, '--algorithm', 'tree,gbm', '--window', '5x0-10,5x0-15,5x0-20'] + \
        data_flags(cohort) + SMALL
    assert main(argv) == 0
    sweep = pd.read_csv(os.path.join(sweep_dir, 'sweep.csv'))
    assert len(sweep) == 6
    first = read(os.path.join(sweep_dir, 'sweep.csv'))
    assert main(argv) == 0
    assert read(os.path.join(sweep_dir, 'sweep.csv')) == first

    sweep_csv = os.path.join(sweep_dir, 'sweep.csv')
    assert main(['select', '--out', select_dir, '--sweep', sweep_csv, '--show-discarded']) == 0
    selected = files.read_json(os.path.join(select_dir, 'select.json'))
    assert sorted(selected['ranking']) == ['Decision Tree', 'Gradient Boosting']
    assert all(a['hypervolume_difference'] is None or a['hypervolume_difference'] <= 0
               for a in selected['algorithms'])
    assert 'not implemented' in read(os.path.join(select_dir, 'select.txt'))

    assert main(['report', '--out', report_dir, '--sweep', sweep_csv]) == 0
    table = pd.read_csv(os.path.join(report_dir, 'report.csv'))
    assert list(table['metric'])[-1] == 'Avg'


def test_train_predict_and_evaluate(cohort, tmp_path):
    model_dir, pred_dir, eval_dir = (str(tmp_path / d) for d in ('model', 'predict', 'evaluate'))
    assert main(['train', '--out', model_dir, '--algorithm', 'tree'] + data_flags(cohort)) == 0
    model_path = os.path.join(model_dir, 'model.json')
    assert main(['predict', '--out', pred_dir, '--model', model_path] + data_flags(cohort)) == 0
    scored = pd.read_csv(os.path.join(pred_dir, 'predictions.csv'))
    assert list(scored.columns) == ['patient_id', 'start_minute', 'label', 'prediction', 'probability']
    assert len(scored) == 30 * 8

    assert main(['evaluate', '--out', eval_dir, '--algorithm', 'tree,knn'] + data_flags(cohort)) == 0
    assert len(pd.read_csv(os.path.join(eval_dir, 'folds.csv'))) == 10
    assert 'Nearest Neighbors' in read(os.path.join(eval_dir, 'evaluate.txt'))


def test_missing_input_names_the_stage(tmp_path, capsys):
    code = main(['ingest', '--out', str(tmp_path), '--rows', str(tmp_path / 'nope.csv'),
                 '--labels', str(tmp_path / 'nope.csv')])
    assert code == 1
    assert "stage 'config' failed" in capsys.readouterr().err


def test_too_few_patients_for_folds(cohort, tmp_path, capsys):
    code = main(['evaluate', '--out', str(tmp_path), '--algorithm', 'tree', '--k', '50'] + data_flags(cohort))
    assert code == 1
    assert "stage 'split' failed" in capsys.readouterr().err


def test_predict_without_eligible_windows(cohort, tmp_path, capsys):
    model_dir = str(tmp_path / 'model')
    assert main(['train', '--out', model_dir, '--algorithm', 'tree'] + data_flags(cohort)) == 0
    rows = read(os.path.join(cohort, 'rows.csv')).splitlines()
    short = [rows[0]] + [line for line in rows[1:] if line.startswith('P00000,')][:4 * 7]
    short_path = str(tmp_path / 'short.csv')
    files.atomic_write(short_path, '\n'.join(short) + '\n')
    code = main(['predict', '--out', str(tmp_path / 'p'), '--model', os.path.join(model_dir, 'model.json'),
                 '--rows', short_path, '--labels', os.path.join(cohort, 'labels.csv')])
    assert code == 1
    assert 'no patient has 5 contiguous complete observations' in capsys.readouterr().err


def test_help_documents_defaults(capsys):
    with pytest.raises(SystemExit):
        main(['sweep', '--help'])
    text = capsys.readouterr().out
    assert '5x0-30' in text
    assert 'default: 5' in text


@pytest.mark.slow
def test_held_out_auc_matches_the_sweep(tmp_path):
    regime = ['--delta', '0,2.5,0,0,0,0', '--ar', '0.95', '--n-patients', '200', '--positives', '60',
              '--duration', '30']
    shrink = ['--param', 'gbm.learning_rate=0.1']
    train_dir, holdout_dir = str(tmp_path / 'train'), str(tmp_path / 'holdout')
    assert main(['synth', '--out', train_dir, '--seed', '1'] + regime) == 0
    assert main(['synth', '--out', holdout_dir, '--seed', '2'] + regime) == 0

    sweep_dir, model_dir, pred_dir = (str(tmp_path / d) for d in ('sweep', 'model', 'predict'))
    assert main(['sweep', '--out', sweep_dir, '--algorithm', 'gbm', '--window', '5x0-30']
                + data_flags(train_dir) + shrink) == 0
    assert main(['train', '--out', model_dir, '--algorithm', 'gbm'] + data_flags(train_dir) + shrink) == 0
    assert main(['predict', '--out', pred_dir, '--model', os.path.join(model_dir, 'model.json')]
                + data_flags(holdout_dir)) == 0

    swept = pd.read_csv(os.path.join(sweep_dir, 'sweep.csv'))['roc_area'].iloc[0]
    scored = pd.read_csv(os.path.join(pred_dir, 'predictions.csv'))
    held_out = roc_auc(scored['probability'].to_numpy(), scored['label'].to_numpy())
    assert abs(held_out - swept) <= 0.05
