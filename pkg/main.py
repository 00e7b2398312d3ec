import argparse
import dataclasses
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import List, Optional

import files
import util
from data import Grouping, Task, WindowSpec, build_dataset, default_window_grid, export_instances
from errors import EmptyReport, StageFailed
from evaluate import (METRIC_COLUMNS, CrossValidator, SweepReport, performance_table, predict_records,
                      run_sweep, train_final_model)
from ingest import load_records
from metrics import MetricVector
from models import DISCARDED, DISPLAY_NAMES, Algorithm, HyperParams
from preprocess import clean_records
from selection import SELECTION_METRICS, SELECTION_METRICS_6, rank_algorithms, retained_algorithms
import synth

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    command: str
    out: str
    seed: int = 0
    jobs: int = 1
    task: Task = Task.DIAGNOSIS
    algorithms: List[Algorithm] = field(default_factory=lambda: [Algorithm.GBM])
    windows: List[WindowSpec] = field(default_factory=lambda: [WindowSpec()])
    k: int = 5
    grouping: Grouping = Grouping.PATIENT
    minority_fraction: float = 0.35
    aggregate: str = 'mean'
    include_timestamp: bool = True
    min_history: int = 10
    sigma_factor: float = 4.0
    params: HyperParams = field(default_factory=HyperParams)
    rows: Optional[str] = None
    labels: Optional[str] = None
    model: Optional[str] = None
    sweep: Optional[str] = None
    tensorboard: Optional[str] = None

    @classmethod
    def from_args(cls, args):
        """Validate the parsed flags; every input path must exist before anything runs."""
        for name in ('rows', 'labels', 'model', 'sweep'):
            path = getattr(args, name, None)
            if path is not None and not os.path.exists(path):
                raise FileNotFoundError(f"--{name} {path} does not exist")
        if not 0 < getattr(args, 'minority_fraction', 0.35) < 1:
            raise ValueError('--minority-fraction must be in (0, 1)')
        cfg = cls(command=args.command, out=args.out, seed=args.seed, jobs=args.jobs,
                  params=HyperParams().override(args.param))
        for name in ('rows', 'labels', 'model', 'sweep', 'tensorboard', 'k', 'minority_fraction', 'aggregate',
                     'min_history', 'sigma_factor'):
            if getattr(args, name, None) is not None:
                setattr(cfg, name, getattr(args, name))
        if getattr(args, 'task', None):
            cfg.task = Task(args.task)
        if getattr(args, 'grouping', None):
            cfg.grouping = Grouping(args.grouping)
        if getattr(args, 'no_timestamp', False):
            cfg.include_timestamp = False
        if getattr(args, 'algorithm', None):
            cfg.algorithms = [Algorithm(a) for a in args.algorithm.split(',')]
        if getattr(args, 'window', None):
            cfg.windows = [WindowSpec.parse(w) for w in args.window.split(',')]
        if getattr(args, 'grid', False):
            cfg.windows = default_window_grid(cfg.windows[0].obs_per_instance)
        return cfg

    def to_dict(self):
        return {'command': self.command, 'seed': self.seed, 'task': self.task.value,
                'algorithms': [a.value for a in self.algorithms], 'windows': [w.flag for w in self.windows],
                'k': self.k, 'grouping': self.grouping.value, 'minority_fraction': self.minority_fraction,
                'aggregate': self.aggregate, 'include_timestamp': self.include_timestamp,
                'min_history': self.min_history, 'sigma_factor': self.sigma_factor,
                'params': self.params.to_dict()}


def _out(cfg, name):
    return os.path.join(cfg.out, name)


def _load_cleaned(cfg):
    with util.stage('ingest'):
        records, ingest_report = load_records(cfg.rows, cfg.labels)
    with util.stage('clean'):
        cleaned, cleaning = clean_records(records, cfg.min_history, cfg.sigma_factor, n_jobs=cfg.jobs)
    return cleaned, ingest_report, cleaning


def _instances(cfg, records, window):
    with util.stage('instances'):
        return build_dataset(records, window, cfg.task, cfg.include_timestamp, n_jobs=cfg.jobs)


# commands #######################################################################

def cmd_synth(cfg, args):
    with util.stage('synth'):
        overrides = {k: v for k, v in (('n_patients', args.n_patients), ('positive_count', args.positives),
                                       ('noise_std', args.noise_std), ('ar', args.ar),
                                       ('duration_minutes', args.duration), ('outlier_rate', args.outlier_rate),
                                       ('missing_rate', args.missing_rate)) if v is not None}
        if args.delta is not None:
            overrides['delta'] = tuple(float(d) for d in args.delta.split(','))
        if args.preset:
            config = synth.preset(args.preset, seed=cfg.seed, **overrides)
        else:
            config = synth.SynthConfig(task=cfg.task.value, seed=cfg.seed, **overrides)
        records = synth.generate_cohort(config, n_jobs=cfg.jobs)
    w = cfg.windows[0].obs_per_instance
    summary = {'config': dataclasses.asdict(config),
               'bayes_operating_point': synth.bayes_operating_point(config, w, cfg.minority_fraction)}
    if config.ar == 0:
        summary['bayes_error'] = synth.bayes_error(config, w)
    else:
        err, se = synth.bayes_error_monte_carlo(config, w, seed=cfg.seed)
        summary['bayes_error'] = err
        summary['bayes_error_stderr'] = se
    with util.stage('write'):
        synth.write_cohort(records, _out(cfg, 'rows.csv'), _out(cfg, 'labels.csv'))
        files.write_json(_out(cfg, 'synth.json'), summary)
    return summary


def cmd_ingest(cfg, args):
    records, ingest_report, cleaning = _load_cleaned(cfg)
    window = cfg.windows[0]
    instances = _instances(cfg, records, window)
    summary = {'patients': len(records), 'observations': sum(len(r.observations) for r in records),
               'gaps': sum(len(r.gaps) for r in records), 'ingest': ingest_report.to_dict(),
               'cleaning': cleaning.to_dict(), 'window': window.flag, 'task': cfg.task.value,
               'instances': len(instances), 'positives': sum(i.label for i in instances)}
    with util.stage('write'):
        export_instances(instances, _out(cfg, 'instances.csv'))
        files.write_json(_out(cfg, 'ingest.json'), summary)
    return summary


def cmd_train(cfg, args):
    records, _, _ = _load_cleaned(cfg)
    algorithm = cfg.algorithms[0]
    instances = _instances(cfg, records, cfg.windows[0])
    with util.stage('train'):
        model = train_final_model(instances, algorithm, cfg.params, cfg.seed, cfg.minority_fraction, cfg.task,
                                  cfg.include_timestamp,
                                  cleaning={'min_history': cfg.min_history, 'sigma_factor': cfg.sigma_factor})
    with util.stage('write'):
        files.save_model(model, _out(cfg, 'model.json'))
        summary = {'algorithm': algorithm.value, 'window': cfg.windows[0].flag, 'task': cfg.task.value,
                   'schema_hash': model.schema_hash, 'instances': len(instances),
                   'trained_on': len(model.metadata['train_predictions'])}
        files.write_json(_out(cfg, 'train.json'), summary)
    return summary


def cmd_evaluate(cfg, args):
    records, _, _ = _load_cleaned(cfg)
    window = cfg.windows[0]
    instances = _instances(cfg, records, window)
    results = {}
    fold_rows = []
    with util.stage('evaluate'):
        for algorithm in cfg.algorithms:
            cv = CrossValidator(algorithm, cfg.params, cfg.k, cfg.grouping, cfg.minority_fraction, cfg.seed,
                                cfg.aggregate)
            result = cv.run(instances)
            results[DISPLAY_NAMES[algorithm]] = result.aggregate
            for i, mv in enumerate(result.folds):
                fold_rows.append(dict(algorithm=algorithm.value, fold=i,
                                      **{m: getattr(mv, m) for m in METRIC_COLUMNS}))
    with util.stage('write'):
        files.write_table(_out(cfg, 'folds.csv'), fold_rows,
                          columns=['algorithm', 'fold'] + list(METRIC_COLUMNS))
        files.write_json(_out(cfg, 'evaluate.json'),
                         {'config': cfg.to_dict(), 'window': window.label,
                          'results': {name: mv.to_dict() for name, mv in results.items()}})
        files.atomic_write(_out(cfg, 'evaluate.txt'), performance_table(results).to_string() + '\n')
    return results


def cmd_sweep(cfg, args):
    records, _, _ = _load_cleaned(cfg)
    with util.stage('sweep'):
        report = run_sweep(records, cfg.algorithms, cfg.windows, cfg.task, cfg.params, cfg.k, cfg.grouping,
                           cfg.minority_fraction, cfg.seed, cfg.aggregate, cfg.include_timestamp, cfg.jobs,
                           cfg.tensorboard)
    with util.stage('write'):
        files.write_table(_out(cfg, 'sweep.csv'), report.to_frame())
        files.write_json(_out(cfg, 'sweep.json'), dict(config=cfg.to_dict(), **report.to_dict()))
    return report


def _read_sweep(cfg):
    frame = files.read_table(cfg.sweep)
    report = SweepReport.from_frame(frame, cfg.task.value, cfg.seed)
    if not report.rows:
        raise EmptyReport(f"{cfg.sweep} holds no solutions")
    return report


def cmd_select(cfg, args):
    with util.stage('select'):
        report = _read_sweep(cfg)
        metric_names = SELECTION_METRICS_6 if args.metrics == 6 else SELECTION_METRICS
        ranking = rank_algorithms(report.solutions(metric_names), mode=args.mode, metric_names=metric_names,
                                  include_discarded=DISCARDED if args.show_discarded else ())
        retained = retained_algorithms(report.best_f1(), args.tolerance)
    with util.stage('write'):
        files.write_json(_out(cfg, 'select.json'), dict(retained=retained, **ranking.to_dict()))
        files.atomic_write(_out(cfg, 'select.txt'), ranking.render())
    return ranking


def cmd_predict(cfg, args):
    with util.stage('ingest'):
        records, _ = load_records(cfg.rows, cfg.labels)
        model = files.load_model(cfg.model)
    with util.stage('predict'):
        scored = predict_records(model, records, n_jobs=cfg.jobs)
    with util.stage('write'):
        files.write_table(_out(cfg, 'predictions.csv'), scored)
        files.write_json(_out(cfg, 'predict.json'),
                         {'algorithm': model.algorithm.value, 'window': model.metadata['window'],
                          'instances': len(scored), 'patients': int(scored['patient_id'].nunique()),
                          'positive_predictions': int(scored['prediction'].sum())})
    return scored


def cmd_report(cfg, args):
    with util.stage('report'):
        report = _read_sweep(cfg)
        best = {}
        for row in report.rows:
            cur = best.get(row['name'])
            if cur is None or (row['f_measure'], -row['window_end']) > (cur['f_measure'], -cur['window_end']):
                best[row['name']] = row
        vectors = {name: MetricVector(**{m: row[m] for m in METRIC_COLUMNS}) for name, row in sorted(best.items())}
        table = performance_table(vectors)
        retained = retained_algorithms(report.best_f1(), args.tolerance)
    with util.stage('write'):
        files.write_table(_out(cfg, 'report.csv'), table.reset_index().rename(columns={'index': 'metric'}))
        files.write_json(_out(cfg, 'report.json'),
                         {'best_windows': {name: row['window'] for name, row in sorted(best.items())},
                          'retained': retained,
                          'discarded': sorted(set(best) - set(retained))})
        windows = '\n'.join(f"{name}: {row['window']}" for name, row in sorted(best.items()))
        files.atomic_write(_out(cfg, 'report.txt'),
                           f"{table.to_string()}\n\nbest windows\n{windows}\n\nretained: {', '.join(retained)}\n")
    return table


COMMANDS = {'synth': cmd_synth, 'ingest': cmd_ingest, 'train': cmd_train, 'evaluate': cmd_evaluate,
            'sweep': cmd_sweep, 'select': cmd_select, 'predict': cmd_predict, 'report': cmd_report}


# arguments ######################################################################

def build_argument_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--out', required=True, type=str, help='output directory')
    common.add_argument('--seed', default=0, type=int, help='run seed, all randomness derives from it (default: 0)')
    common.add_argument('--jobs', default=1, type=int, help='worker processes (default: 1)')
    common.add_argument('--param', action='append', default=[], metavar='SECTION.FIELD=VALUE',
                        help='hyper-parameter override, e.g. forest.n_estimators=200 (repeatable)')
    common.add_argument('--verbose', default=False, action='store_true', help='debug logging (default: off)')

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument('--rows', required=True, type=str, help='monitor rows CSV')
    data.add_argument('--labels', required=True, type=str, help='patient labels CSV')

    experiment = argparse.ArgumentParser(add_help=False)
    experiment.add_argument('--task', default='diagnosis', choices=[t.value for t in Task],
                            help='prediction task (default: diagnosis)')
    experiment.add_argument('--window', default='5x0-30', type=str,
                            help='W x start-end minutes, comma separated for several (default: 5x0-30)')
    experiment.add_argument('--no-timestamp', default=False, action='store_true',
                            help='leave the minutes-since-admission feature out (default: off)')
    experiment.add_argument('--min-history', default=10, type=int,
                            help='values needed before the outlier rule applies (default: 10)')
    experiment.add_argument('--sigma-factor', default=4.0, type=float,
                            help='outlier threshold in standard deviations (default: 4)')
    experiment.add_argument('--minority-fraction', default=0.35, type=float,
                            help='minority class share after balancing (default: 0.35)')

    cv = argparse.ArgumentParser(add_help=False)
    cv.add_argument('--k', default=5, type=int, help='number of folds (default: 5)')
    cv.add_argument('--grouping', default='patient', choices=[g.value for g in Grouping],
                    help='keep patients or instances together in folds (default: patient)')
    cv.add_argument('--aggregate', default='mean', choices=['mean', 'pooled'],
                    help='fold mean or pooled out-of-fold metrics (default: mean)')

    algorithms = ','.join(a.value for a in Algorithm)
    parser = argparse.ArgumentParser(description='stroke monitoring pipeline')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('synth', parents=[common, experiment], help='generate a synthetic cohort')
    p.add_argument('--preset', default=None, choices=sorted(synth.PRESETS), help='cohort shape (default: none)')
    p.add_argument('--n-patients', default=None, type=int, help='number of patients (default: 100)')
    p.add_argument('--positives', default=None, type=int, help='exact number of positive patients')
    p.add_argument('--delta', default=None, type=str,
                   help='class offsets for VE,CF,BF,Perf,SpO2,ST_II (default: 0,2.5,2.5,0,2.5,2.5)')
    p.add_argument('--noise-std', default=None, type=float, help='noise std (default: 1)')
    p.add_argument('--ar', default=None, type=float, help='AR(1) coefficient (default: 0.8)')
    p.add_argument('--duration', default=None, type=float, help='monitoring minutes (default: 60)')
    p.add_argument('--outlier-rate', default=None, type=float, help='injected outlier rate (default: 0)')
    p.add_argument('--missing-rate', default=None, type=float, help='injected missing rate (default: 0)')

    sub.add_parser('ingest', parents=[common, data, experiment], help='ingest, clean and export instances')

    p = sub.add_parser('train', parents=[common, data, experiment], help='train one model on all data')
    p.add_argument('--algorithm', default='gbm', choices=[a.value for a in Algorithm],
                   help='learner (default: gbm)')

    p = sub.add_parser('evaluate', parents=[common, data, experiment, cv], help='cross-validate learners')
    p.add_argument('--algorithm', default=algorithms, type=str, help=f"comma list (default: {algorithms})")

    p = sub.add_parser('sweep', parents=[common, data, experiment, cv], help='cross-validate a window grid')
    p.add_argument('--algorithm', default=algorithms, type=str, help=f"comma list (default: {algorithms})")
    p.add_argument('--grid', default=False, action='store_true',
                   help='use the default grid T in 5..120 step 5, 180, 360, 540 (default: off)')
    p.add_argument('--tensorboard', default=None, type=str, help='tensorboardX log directory (default: none)')

    for name, helptext in (('select', 'rank algorithms by hypervolume'), ('report', 'best-window metric table')):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument('--sweep', required=True, type=str, help='sweep.csv written by the sweep command')
        p.add_argument('--tolerance', default=0.10, type=float,
                       help='drop algorithms whose best F is more than this share below the best (default: 0.1)')
        if name == 'select':
            p.add_argument('--mode', default='union', choices=['union', 'box_sum'],
                           help='union hypervolume or summed box volumes (default: union)')
            p.add_argument('--metrics', default=4, type=int, choices=[4, 6],
                           help='F, specificity, sensitivity, accuracy (+ ROC, PRC) (default: 4)')
            p.add_argument('--show-discarded', default=False, action='store_true',
                           help='list the discarded algorithm families (default: off)')

    p = sub.add_parser('predict', parents=[common, data], help='score windows with a trained model')
    p.add_argument('--model', required=True, type=str, help='model.json written by the train command')
    return parser


def main(argv=None):
    args = build_argument_parser().parse_args(argv)
    util.setup_runtime(seed=args.seed, verbose=args.verbose)
    logger.info(f'args => {vars(args)}')
    start = time.time()
    try:
        with util.stage('config'):
            cfg = RunConfig.from_args(args)
            files.xmkdir(cfg.out)
        COMMANDS[cfg.command](cfg, args)
    except StageFailed as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    logger.info(f"{args.command} took {(time.time() - start) / 60:.2f}min")
    return 0


if __name__ == "__main__":
    sys.exit(main())
