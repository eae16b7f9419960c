import json
import shutil
import tempfile
from io import StringIO
from pathlib import Path

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase, tag

from utils.exceptions import ScenarioError, SimulationError
from .artifacts import ArtifactWriter
from .runner import check_scenario, expand_sweeps, load_scenario, validate_scenario

PRESETS = Path(__file__).resolve().parent / 'presets'

UNIT = {'type': 'interval', 'a': 0.0, 'b': 1.0}
DISC = {'type': 'ball', 'center': [0.0, 0.0], 'radius': 1.0}


class TempDirMixin:

    def setUp(self):
        super().setUp()
        self.tmp = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.tmp, ignore_errors=True)

    def write_scenario(self, data: dict, name='scenario.json') -> Path:
        path = self.tmp / name
        path.write_text(json.dumps(data))
        return path


class ScenarioSerializerTestCase(SimpleTestCase):

    def base(self, **extra):
        return {'kind': 'fv-run', 'model': {'name': 'brownian'}, 'domain': UNIT, 'N': 50, 't_end': 1.0, **extra}

    def test_minimal_fv_run(self):
        data = validate_scenario(self.base())
        self.assertEqual(data['N'], [50])
        self.assertEqual(data['seed'], 0)
        self.assertEqual(data['s'], 0.0)
        self.assertTrue(data['bridge_correction'])
        self.assertEqual(data['domain']['domain'].dim, 1)

    def test_missing_kind_fields(self):
        with self.assertRaises(ScenarioError) as ctx:
            validate_scenario({'kind': 'mixing-curve', 'model': {'name': 'brownian'}})
        errors = ctx.exception.details['errors']
        for name in ('times', 'x_left', 'x_right', 'survivors'):
            self.assertIn(name, errors)

    def test_unknown_model(self):
        with self.assertRaises(ScenarioError) as ctx:
            validate_scenario(self.base(model={'name': 'nope'}))
        self.assertIn('model', ctx.exception.details['errors'])

    def test_unsorted_checkpoints(self):
        with self.assertRaises(ScenarioError):
            validate_scenario(self.base(checkpoints=[0.5, 0.2]))

    def test_checkpoints_beyond_t_end(self):
        with self.assertRaises(ScenarioError):
            validate_scenario(self.base(checkpoints=[0.5, 2.0]))

    def test_non_positive_values(self):
        for extra in ({'dt': 0.0}, {'alpha': -0.1}, {'N': 1}, {'dt': [1e-3, -1e-3]}):
            with self.assertRaises(ScenarioError, msg=str(extra)):
                validate_scenario(self.base(**extra))

    def test_incomplete_domain(self):
        with self.assertRaises(ScenarioError):
            validate_scenario(self.base(domain={'type': 'ball', 'radius': 1.0}))

    def test_scaling_needs_two_sizes(self):
        with self.assertRaises(ScenarioError):
            validate_scenario({'kind': 'fv-scaling', 'model': {'name': 'brownian'}, 'N': 100, 't_end': 1.0,
                               'runs': 3})

    def test_point_law_needs_x(self):
        with self.assertRaises(ScenarioError):
            validate_scenario(self.base(init={'type': 'point'}))


class SweepTestCase(SimpleTestCase):

    def test_cartesian_product_in_order(self):
        data = validate_scenario({'kind': 'fv-run', 'model': {'name': 'brownian'}, 'N': [100, 400],
                                  'dt': [1e-3, 1e-2], 't_end': 1.0})
        variants = expand_sweeps(data)
        self.assertEqual([(v['N'], v['dt']) for v in variants],
                         [(100, 1e-3), (100, 1e-2), (400, 1e-3), (400, 1e-2)])

    def test_scaling_keeps_population_list(self):
        data = validate_scenario({'kind': 'fv-scaling', 'model': {'name': 'brownian'}, 'N': [100, 900],
                                  't_end': 1.0, 'runs': 3})
        variants = expand_sweeps(data)
        self.assertEqual(len(variants), 1)
        self.assertEqual(variants[0]['N'], [100, 900])

    def test_default_dt(self):
        data = validate_scenario({'kind': 'survival', 'model': {'name': 'brownian'}, 't_end': 1.0,
                                  'replicas': 10})
        variants = expand_sweeps(data)
        self.assertEqual(len(variants), 1)
        self.assertGreater(variants[0]['dt'], 0)
        self.assertNotIn('N', variants[0])


class LoadScenarioTestCase(TempDirMixin, SimpleTestCase):

    def test_yaml_and_json_agree(self):
        yaml_path = self.tmp / 'run.yaml'
        yaml_path.write_text('kind: survival\nmodel: {name: brownian}\nt_end: 0.5\nreplicas: 100\n')
        json_path = self.write_scenario({'kind': 'survival', 'model': {'name': 'brownian'}, 't_end': 0.5,
                                         'replicas': 100})
        self.assertEqual(load_scenario(yaml_path), load_scenario(json_path))

    def test_missing_file(self):
        with self.assertRaises(ScenarioError) as ctx:
            load_scenario(self.tmp / 'absent.yaml')
        self.assertEqual(ctx.exception.code, 'scenario_not_found')

    def test_not_a_mapping(self):
        path = self.tmp / 'list.yaml'
        path.write_text('- 1\n- 2\n')
        with self.assertRaises(ScenarioError):
            load_scenario(path)

    def test_unparsable(self):
        path = self.tmp / 'broken.json'
        path.write_text('{"kind": ')
        with self.assertRaises(ScenarioError) as ctx:
            load_scenario(path)
        self.assertEqual(ctx.exception.code, 'scenario_unparsable')

    def test_presets_are_valid(self):
        presets = sorted(PRESETS.glob('*.yaml'))
        self.assertGreater(len(presets), 5)
        for path in presets:
            resolved = check_scenario(load_scenario(path))
            self.assertGreaterEqual(len(resolved['variants']), 1, path.name)

    def test_check_rejects_point_outside_domain(self):
        with self.assertRaises(SimulationError):
            check_scenario({'kind': 'conditioned-mc', 'model': {'name': 'brownian'}, 'domain': UNIT,
                            't_end': 0.1, 'survivors': 10, 'init': {'type': 'point', 'x': [1.5]}})


class ArtifactWriterTestCase(TempDirMixin, SimpleTestCase):

    def test_csv_format(self):
        writer = ArtifactWriter(self.tmp)
        path = writer.csv('table.csv', [{'t': 0.1, 'tv': 1 / 3}, {'t': 0.2, 'tv': 0.25}])
        raw = path.read_bytes()
        self.assertNotIn(b'\r', raw)
        self.assertTrue(raw.startswith(b't,tv\n'))
        self.assertEqual(raw.count(b'\n'), 3)
        self.assertEqual(list(self.tmp.iterdir()), [path])

    def test_empty_table_keeps_header(self):
        path = ArtifactWriter(self.tmp).csv('empty.csv', [], columns=['time', 'killed'])
        self.assertEqual(path.read_text(), 'time,killed\n')

    def test_json_sorted(self):
        path = ArtifactWriter(self.tmp).json('summary.json', {'b': 1, 'a': float('nan')})
        self.assertEqual(json.loads(path.read_text()), {'a': None, 'b': 1})
        self.assertLess(path.read_text().index('"a"'), path.read_text().index('"b"'))

    def test_child_shares_log(self):
        writer = ArtifactWriter(self.tmp)
        writer.child('sweep_0').json('x.json', {})
        self.assertEqual(writer.written, [str(self.tmp / 'sweep_0' / 'x.json')])


class ModelCommandTestCase(SimpleTestCase):

    def test_list_models(self):
        out = StringIO()
        call_command('list_models', stdout=out)
        for name in ('brownian', 'remark1_1', 'remark1_2', 'remark1_3', 'remark1_4'):
            self.assertIn(name, out.getvalue())

    def test_describe(self):
        out = StringIO()
        call_command('describe_model', 'remark1_3', stdout=out)
        self.assertIn('time-periodic drift', out.getvalue().lower())
        self.assertIn('declared c0', out.getvalue())

    def test_describe_unknown(self):
        with self.assertRaises(CommandError):
            call_command('describe_model', 'unknown', stdout=StringIO(), stderr=StringIO())


class RunScenarioTestCase(TempDirMixin, SimpleTestCase):

    def run_scenario(self, data: dict, out='out', **options) -> Path:
        out_dir = self.tmp / out
        self.stdout = StringIO()
        call_command('run_scenario', scenario=str(self.write_scenario(data)), out=str(out_dir),
                     stdout=self.stdout, stderr=StringIO(), **options)
        return out_dir

    def summary(self, out_dir: Path) -> dict:
        return json.loads((out_dir / 'summary.json').read_text())

    def test_check_model(self):
        out_dir = self.tmp / 'check'
        call_command('check_model', 'brownian', samples=500, out=str(out_dir), stdout=StringIO())
        table = pd.read_csv(out_dir / 'validation.csv')
        self.assertTrue(table['passed'].all())
        self.assertIn('joint_covariance', set(table['check']))

    def test_conditioned(self):
        data = {'kind': 'conditioned-mc', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2,
                't_end': 0.2, 'survivors': 300, 'bins': 10, 'init': {'type': 'point', 'x': [0.5]}}
        out_dir = self.run_scenario(data)
        for name in ('cloud.csv', 'histogram.csv', 'summary.json', 'scenario.resolved.json'):
            self.assertTrue((out_dir / name).exists(), name)
        cloud = pd.read_csv(out_dir / 'cloud.csv')
        self.assertEqual(len(cloud), 300)
        self.assertTrue(((cloud['x0'] > 0) & (cloud['x0'] < 1)).all())
        summary = self.summary(out_dir)
        self.assertEqual(summary['count'], 300)
        self.assertIn('tv_reference', summary)
        resolved = json.loads((out_dir / 'scenario.resolved.json').read_text())
        self.assertEqual(resolved['domain'], UNIT)
        self.assertEqual(resolved['params']['dt'], 1e-2)

    def test_byte_identical_reruns(self):
        data = {'kind': 'conditioned-mc', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2,
                't_end': 0.2, 'survivors': 200, 'seed': 11}
        first = self.run_scenario(data, out='first')
        second = self.run_scenario(data, out='second')
        self.assertEqual((first / 'cloud.csv').read_bytes(), (second / 'cloud.csv').read_bytes())
        third = self.run_scenario(data, out='third', seed=12)
        self.assertNotEqual((first / 'cloud.csv').read_bytes(), (third / 'cloud.csv').read_bytes())

    def test_schema_error(self):
        out_dir = self.tmp / 'bad'
        stderr = StringIO()
        with self.assertRaises(CommandError):
            call_command('run_scenario', scenario=str(self.write_scenario({'kind': 'fv-run'})), out=str(out_dir),
                         stdout=StringIO(), stderr=stderr)
        error = json.loads((out_dir / 'error.json').read_text())
        self.assertFalse(error['success'])
        self.assertEqual(error['error_code'], 'scenario_invalid')
        self.assertIn('scenario_invalid', stderr.getvalue())

    def test_insufficient_survivors(self):
        data = {'kind': 'conditioned-mc', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2,
                't_end': 3.0, 'survivors': 100, 'max_replicas': 1000, 'init': {'type': 'point', 'x': [0.5]}}
        with self.assertRaises(CommandError):
            self.run_scenario(data, out='starved')
        error = json.loads((self.tmp / 'starved' / 'error.json').read_text())
        self.assertEqual(error['error_code'], 'insufficient_survivors')
        self.assertFalse((self.tmp / 'starved' / 'summary.json').exists())

    def test_fv_run(self):
        data = {'kind': 'fv-run', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2, 'N': 50,
                't_end': 0.5, 'checkpoints': [0.25, 0.5], 'pool_from': 0.25, 'bins': 10}
        out_dir = self.run_scenario(data)
        checkpoints = pd.read_csv(out_dir / 'checkpoints.csv')
        self.assertEqual(list(checkpoints['time']), [0.25, 0.5])
        self.assertIn('tv_qsd', checkpoints.columns)
        self.assertEqual(len(pd.read_csv(out_dir / 'clouds.csv')), 100)
        rebirths = pd.read_csv(out_dir / 'rebirths.csv')
        self.assertEqual(list(rebirths.columns), ['time', 'killed', 'donor', 'kind'])
        summary = self.summary(out_dir)
        self.assertEqual(summary['run']['rebirths'], len(rebirths))
        self.assertEqual(summary['pooled']['points'], 100)
        self.assertEqual(summary['jumps']['count'], len(rebirths))
        self.assertIn('t=0.25', self.stdout.getvalue())

    def test_sweep(self):
        data = {'kind': 'survival', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': [1e-2, 2e-2],
                't_end': 0.5, 'replicas': 500, 'init': {'type': 'point', 'x': [0.5]}}
        out_dir = self.run_scenario(data)
        index = pd.read_csv(out_dir / 'sweeps.csv')
        self.assertEqual(list(index['dt']), [1e-2, 2e-2])
        resolved = json.loads((out_dir / 'scenario.resolved.json').read_text())
        self.assertEqual(resolved['sweeps'], ['sweep_0', 'sweep_1'])
        self.assertEqual([variant['params']['dt'] for variant in resolved['variants']], [1e-2, 2e-2])
        for k in range(2):
            summary = self.summary(out_dir / f'sweep_{k}')
            self.assertEqual([row['method'] for row in summary['estimates']], ['bridge', 'naive'])
            self.assertAlmostEqual(summary['oracle'], 0.1080, places=3)

    def test_mixing_curve(self):
        data = {'kind': 'mixing-curve', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2,
                'times': [0.05, 0.1, 0.15], 'x_left': [0.2], 'x_right': [0.8], 'survivors': 200, 'bins': 10}
        out_dir = self.run_scenario(data)
        curve = pd.read_csv(out_dir / 'mixing_curve.csv')
        self.assertEqual(list(curve.columns), ['t', 'tv', 'tv_reference'])
        self.assertTrue((out_dir / 'rate_fit.json').exists())
        # the closed-form curve decays
        self.assertTrue((curve['tv_reference'].diff().dropna() < 0).all())

    def test_coupling_sweep(self):
        data = {'kind': 'coupling-sweep', 'model': {'name': 'brownian'}, 'domain': DISC, 'dt': 1e-2,
                'separations': [0.05, 0.1], 'times': [0.1, 0.2], 'replicas': 200}
        out_dir = self.run_scenario(data)
        table = pd.read_csv(out_dir / 'coupling_failure.csv')
        self.assertEqual(len(table), 4)
        summary = self.summary(out_dir)
        self.assertTrue(summary['monotone_in_t'])
        self.assertAlmostEqual(summary['coupling']['lambda0'], 0.5)

    def test_fv_vs_mc(self):
        data = {'kind': 'fv-vs-mc', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2, 'N': 100,
                'checkpoints': [0.2, 0.4], 'survivors': 200, 'reference_window': 0.1, 'bins': 10}
        out_dir = self.run_scenario(data)
        table = pd.read_csv(out_dir / 'fv_vs_mc.csv')
        self.assertEqual(len(table), 2)
        self.assertAlmostEqual(table['reference_start'][1], 0.3)
        summary = self.summary(out_dir)
        self.assertIn('tv_ratio', summary)
        self.assertEqual(summary['noise_allowance'], 0.05)
        self.assertEqual(summary['flat'], summary['tv_ratio'] <= 1.55)

    def test_fv_scaling(self):
        data = {'kind': 'fv-scaling', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2, 'N': [20, 40],
                'runs': 3, 't_end': 0.2}
        out_dir = self.run_scenario(data)
        self.assertEqual(len(pd.read_csv(out_dir / 'fv_scaling.csv')), 2)
        summary = self.summary(out_dir)
        self.assertEqual(summary['oracle_source'], 'closed_form')
        self.assertAlmostEqual(summary['oracle'], 0.5, places=6)

    def test_horizon(self):
        data = {'kind': 'horizon-mc', 'model': {'name': 'brownian'}, 'domain': UNIT, 'dt': 1e-2, 't_end': 0.1,
                'horizon': 0.3, 'survivors': 100, 'init': {'type': 'point', 'x': [0.5]}}
        out_dir = self.run_scenario(data)
        self.assertEqual(self.summary(out_dir)['horizon'], 0.3)
        self.assertEqual(len(pd.read_csv(out_dir / 'cloud.csv')), 100)

    def test_box_runs_are_flagged(self):
        box = {'type': 'box', 'lower': [0.0, 0.0], 'upper': [1.0, 1.0]}
        data = {'kind': 'survival', 'model': {'name': 'brownian'}, 'domain': box, 'dt': 1e-2, 't_end': 0.1,
                'replicas': 200, 'init': {'type': 'point', 'x': [0.5, 0.5]}}
        with self.assertLogs('scenarios.runner', 'WARNING') as logs:
            out_dir = self.run_scenario(data)
        self.assertIn('non-smooth boundary', logs.output[0])
        self.assertIs(self.summary(out_dir)['smooth_boundary'], False)
        resolved = json.loads((out_dir / 'scenario.resolved.json').read_text())
        self.assertIs(resolved['domain']['smooth_boundary'], False)

        disc = self.run_scenario({**data, 'domain': DISC, 'init': {'type': 'point', 'x': [0.0, 0.0]}}, out='disc')
        self.assertIs(self.summary(disc)['smooth_boundary'], True)

    @tag('slow')
    def test_mixing_rate_preset(self):
        out_dir = self.tmp / 'mixing'
        call_command('run_scenario', scenario=str(PRESETS / 'mixing_rate.yaml'), out=str(out_dir),
                     stdout=StringIO())
        fit = json.loads((out_dir / 'rate_fit.json').read_text())
        self.assertGreaterEqual(fit['gamma'], 9.0)
        self.assertLessEqual(fit['gamma'], 21.0)
        self.assertGreaterEqual(fit['r_squared'], 0.9)

    @tag('slow')
    def test_qsd_recovery_preset(self):
        out_dir = self.tmp / 'qsd'
        call_command('run_scenario', scenario=str(PRESETS / 'qsd_recovery.yaml'), out=str(out_dir),
                     stdout=StringIO())
        summary = self.summary(out_dir)
        self.assertLessEqual(summary['pooled']['tv_qsd'], 0.12)
        self.assertLessEqual(summary['checkpoints'][-1]['tv_qsd'], 0.16)

    @tag('slow')
    def test_fv_vs_mc_rotating_preset(self):
        out_dir = self.tmp / 'rotating'
        call_command('run_scenario', scenario=str(PRESETS / 'fv_vs_mc_rotating.yaml'), out=str(out_dir),
                     stdout=StringIO())
        summary = self.summary(out_dir)
        self.assertEqual(summary['noise_allowance'], 0.05)
        self.assertLessEqual(summary['tv_ratio'], 1.55)
        self.assertTrue(summary['flat'])
