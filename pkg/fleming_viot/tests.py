import numpy as np
from django.test import SimpleTestCase, tag
from scipy import stats

from diffusions.coefficients import ConstantCoefficientModel
from diffusions.library import build_model
from geometry.domains import Interval
from killed_path.engine import SimParams
from killed_path.laws import UniformLaw
from measures.empirical import Binning, EmpiricalMeasure, histogram, tv_distance
from measures.references import binned_qsd
from utils.exceptions import FlemingViotError, SimulationError
from .diagnostics import fv_jump_time_diagnostic, rate_stability
from .particles import RebirthEvent, fv_error, fv_error_scaling, fv_init, fv_run, fv_step


def left_half(points):
    return (points[:, 0] <= 0.5).astype(float)


def pooled(run):
    return EmpiricalMeasure(np.concatenate([measure.points for _, measure in run.snapshots]))


class InitTestCase(SimpleTestCase):

    def setUp(self):
        self.model, self.domain = build_model('brownian')

    def test_explicit_points(self):
        system = fv_init(self.model, self.domain, np.full((10, 1), 0.3), None, 0.0, SimParams())
        self.assertEqual(system.N, 10)
        np.testing.assert_array_equal(system.empirical().points, np.full((10, 1), 0.3))

    def test_uniform_law(self):
        N = 1000
        system = fv_init(self.model, self.domain, UniformLaw(self.domain), N, 0.0, SimParams(seed=1))
        self.assertAlmostEqual(system.empirical().mean()[0], 0.5, delta=3 / np.sqrt(12 * N))
        self.assertIsNotNone(system.initial_boundary_mass)

    def test_rejections(self):
        with self.assertRaises(SimulationError):
            fv_init(self.model, self.domain, [[0.5]], None, 0.0, SimParams())
        with self.assertRaises(SimulationError):
            fv_init(self.model, self.domain, [[0.5], [1.5]], None, 0.0, SimParams())
        with self.assertRaises(SimulationError):
            fv_init(self.model, self.domain, [[0.5], [0.6]], 3, 0.0, SimParams())


class StepTestCase(SimpleTestCase):

    def setUp(self):
        self.domain = Interval(0.0, 1.0)

    def test_unique_donor(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0, rate=1.0)
        system = fv_init(model, self.domain, [[0.2], [0.7]], None, 0.0, SimParams(dt=0.01))
        system.thresholds[:] = [1e-6, np.inf]
        report = fv_step(system, 0.01)
        self.assertEqual(len(report.events), 1)
        event = report.events[0]
        self.assertEqual((event.killed_index, event.donor_index, event.kind), (0, 1, 'soft'))
        np.testing.assert_array_equal(system.positions, [[0.7], [0.7]])
        self.assertEqual(system.soft_clocks[0], 0.0)

    def test_frozen_dynamics_has_no_events(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0)
        system = fv_init(model, self.domain, UniformLaw(self.domain), 50, 0.0, SimParams(dt=0.01))
        run = fv_run(system, 1.0, [0.5, 1.0])
        self.assertEqual(run.rebirth_log, [])
        self.assertEqual(fv_jump_time_diagnostic(run.rebirth_log, 1.0)['count'], 0)

    def test_interior_particles_rarely_die(self):
        model, _ = build_model('brownian')
        system = fv_init(model, self.domain, np.full((100, 1), 0.5), None, 0.0, SimParams(dt=1e-4))
        for _ in range(10):
            fv_step(system, 1e-4)
        self.assertEqual(system.rebirth_log, [])

    def test_all_killed_retries(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0, rate=1.0)
        system = fv_init(model, self.domain, [[0.2], [0.7]], None, 0.0, SimParams(dt=0.01))
        # both clocks ring within the first quarter of the step
        system.thresholds[:] = [0.002, 0.003]
        report = fv_step(system, 0.01)
        self.assertEqual(report.attempts, 3)
        self.assertAlmostEqual(report.dt_used, 0.0025)
        self.assertEqual(system.retries, 2)
        self.assertEqual(len(report.events), 1)
        self.assertAlmostEqual(system.clock, 0.0025)

    def test_dt_underflow(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0, rate=1.0)
        system = fv_init(model, self.domain, [[0.2], [0.7]], None, 0.0, SimParams(dt=0.01))
        system.thresholds[:] = 0.0
        with self.assertRaises(FlemingViotError) as ctx:
            fv_step(system, 0.01)
        self.assertIn('attempts', ctx.exception.details)

    def test_donor_uniformity(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0, rate=1.0)
        system = fv_init(model, self.domain, np.linspace(0.1, 0.9, 5).reshape(-1, 1), None, 0.0,
                         SimParams(dt=0.2, seed=4))
        ranks = []
        while len(ranks) < 10000:
            report = fv_step(system, 0.2)
            for event in report.events:
                self.assertNotEqual(event.donor_index, event.killed_index)
            if len(report.events) == 1:
                event = report.events[0]
                ranks.append(event.donor_index - int(event.donor_index > event.killed_index))
        counts = np.bincount(ranks, minlength=4)
        self.assertGreater(stats.chisquare(counts).pvalue, 0.001)

    def test_deterministic_for_a_seed(self):
        model, _ = build_model('brownian')
        runs = []
        for _ in range(2):
            system = fv_init(model, self.domain, UniformLaw(self.domain), 200, 0.0, SimParams(dt=5e-3, seed=7))
            runs.append(fv_run(system, 0.5, [0.25, 0.5]))
        self.assertEqual(runs[0].rebirth_log, runs[1].rebirth_log)
        np.testing.assert_array_equal(runs[0].snapshots[-1][1].points, runs[1].snapshots[-1][1].points)


class RunTestCase(SimpleTestCase):

    def setUp(self):
        self.model, self.domain = build_model('brownian')

    def test_empty_run(self):
        system = fv_init(self.model, self.domain, UniformLaw(self.domain), 100, 0.5, SimParams())
        initial = system.empirical().points
        run = fv_run(system, 0.5, [0.5])
        self.assertEqual(len(run.snapshots), 1)
        np.testing.assert_array_equal(run.measure_at(0.5).points, initial)

    def test_conservation_and_exact_checkpoints(self):
        system = fv_init(self.model, self.domain, UniformLaw(self.domain), 300, 0.0, SimParams(dt=0.03, seed=2))
        checkpoints = [0.1, 0.25, 0.5]
        run = fv_run(system, 0.5, checkpoints)
        self.assertEqual([time for time, _ in run.snapshots], checkpoints)
        for _, measure in run.snapshots:
            self.assertEqual(measure.count, 300)
            self.assertTrue(np.all(self.domain.contains(measure.points)))
        times = [event.time for event in run.rebirth_log]
        self.assertTrue(np.all(np.diff(times) > 0))
        self.assertGreater(fv_jump_time_diagnostic(run.rebirth_log, 0.5)['min_gap'], 0)
        self.assertEqual(run.summary['rebirths'], len(run.rebirth_log))
        self.assertEqual(len(run.summary['boundary_mass']), 3)

    def test_invalid_checkpoints(self):
        system = fv_init(self.model, self.domain, UniformLaw(self.domain), 10, 0.0, SimParams())
        with self.assertRaises(SimulationError):
            fv_run(system, 1.0, [1.5])

    def test_unit_rate_soft_kill_count(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0, rate=1.0)
        N, t_end = 200, 5.0
        system = fv_init(model, self.domain, UniformLaw(self.domain), N, 0.0, SimParams(dt=0.01, seed=3))
        run = fv_run(system, t_end, [t_end])
        diagnostic = fv_jump_time_diagnostic(run.rebirth_log, t_end)
        expected = N * t_end
        self.assertAlmostEqual(diagnostic['count'], expected, delta=4 * np.sqrt(expected) + 0.01 * expected)
        self.assertEqual(run.summary['soft_kills'], diagnostic['count'])
        self.assertEqual(len(diagnostic['rate_per_unit_time']), 5)

    def test_close_to_qsd(self):
        binning = Binning.regular(0.0, 1.0, 10)
        system = fv_init(self.model, self.domain, UniformLaw(self.domain), 500, 0.0, SimParams(dt=2e-3, seed=5))
        run = fv_run(system, 2.0, np.round(np.arange(1.0, 2.0001, 0.05), 10))
        self.assertLessEqual(tv_distance(histogram(pooled(run), binning), binned_qsd(binning)), 0.1)

    def test_exchangeable_in_particle_order(self):
        points = np.linspace(0.05, 0.95, 20).reshape(-1, 1)
        permuted = points[np.random.default_rng(0).permutation(20)]
        means = {'ordered': [], 'permuted': []}
        for seed in range(40):
            for label, init in (('ordered', points), ('permuted', permuted)):
                system = fv_init(self.model, self.domain, init, None, 0.0, SimParams(dt=1e-2, seed=100 + seed))
                run = fv_run(system, 0.3, [0.3])
                means[label].append(run.snapshots[0][1].mean()[0])
        self.assertGreater(stats.ks_2samp(means['ordered'], means['permuted']).pvalue, 0.001)

    def test_error_decays_like_inverse_root_n(self):
        scaling = fv_error_scaling(
            self.model, self.domain, UniformLaw(self.domain), [100, 900], runs=40, s=0.0, t=1.0,
            f=left_half, oracle=0.5, params=SimParams(dt=5e-3, seed=6), workers=1,
        )
        ratio = scaling.ratio(100, 900)
        self.assertGreaterEqual(ratio, 1.8)
        self.assertLessEqual(ratio, 4.5)

    def test_fv_error(self):
        measure = EmpiricalMeasure([[0.2], [0.4], [0.7], [0.9]])
        self.assertAlmostEqual(fv_error(measure, left_half, 0.25), 0.25)

    @tag('slow')
    def test_qsd_recovery_full_size(self):
        binning = Binning.regular(0.0, 1.0, 50)
        system = fv_init(self.model, self.domain, UniformLaw(self.domain), 2000, 0.0, SimParams(dt=2e-3, seed=8))
        run = fv_run(system, 4.0, np.round(np.arange(3.0, 4.0001, 0.05), 10))
        reference = binned_qsd(binning)
        self.assertLessEqual(tv_distance(histogram(pooled(run), binning), reference), 0.12)
        self.assertLessEqual(tv_distance(histogram(run.measure_at(4.0), binning), reference), 0.16)

        diagnostic = fv_jump_time_diagnostic(system.rebirth_log, 4.0)
        stability = rate_stability(diagnostic, 1.0, 4.0)
        self.assertIsNotNone(stability)
        self.assertLessEqual(stability, 2.0)


class DiagnosticTestCase(SimpleTestCase):

    def test_rate_series(self):
        log = [RebirthEvent(t, 0, 1, 'hard') for t in (0.1, 0.5, 1.2, 2.9, 3.0)]
        diagnostic = fv_jump_time_diagnostic(log, 3.0)
        self.assertEqual(diagnostic['count'], 5)
        self.assertAlmostEqual(diagnostic['min_gap'], 0.1)
        self.assertEqual([row['count'] for row in diagnostic['rate_per_unit_time']], [2, 1, 2])

    def test_empty_log(self):
        diagnostic = fv_jump_time_diagnostic([], 2.0)
        self.assertEqual(diagnostic['count'], 0)
        self.assertIsNone(diagnostic['min_gap'])

    def test_unordered_log(self):
        log = [RebirthEvent(0.5, 0, 1, 'hard'), RebirthEvent(0.5, 1, 0, 'hard')]
        with self.assertRaises(FlemingViotError):
            fv_jump_time_diagnostic(log, 1.0)
