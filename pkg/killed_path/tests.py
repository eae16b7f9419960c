import numpy as np
from django.test import SimpleTestCase, override_settings, tag
from scipy import stats

from diffusions.coefficients import ConstantCoefficientModel
from diffusions.library import build_model
from geometry.domains import Ball, Interval
from measures.empirical import Binning, histogram, tv_distance
from measures.references import binned_qsd, survival_probability
from utils.exceptions import InsufficientSurvivorsError, SimulationError
from . import streams
from .engine import HARD_KILLED, SOFT_KILLED, SimParams, advance, simulate, simulate_batch, step, time_grid
from .estimators import (
    conditioned_sample,
    estimate_survival,
    flat_maximum_diagnostic,
    horizon_conditioned_sample,
    survival_profile,
)
from .laws import PointCloud, PointMass, UniformLaw, law_from_descriptor

ORACLE = float(survival_probability(0.5, 0.5))


class StreamTestCase(SimpleTestCase):

    def test_substreams_are_reproducible_and_distinct(self):
        a = streams.substream(7, 0, 3).random(5)
        b = streams.substream(7, 0, 3).random(5)
        c = streams.substream(7, 0, 4).random(5)
        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))

    def test_block_counts(self):
        self.assertEqual(streams.block_counts(10, 4), [4, 4, 2])
        self.assertEqual(streams.block_counts(8, 4), [4, 4])

    def test_map_ordered_keeps_order(self):
        self.assertEqual(streams.map_ordered(abs, [-3, 2, -1], workers=1), [3, 2, 1])


class TimeGridTestCase(SimpleTestCase):

    def test_partial_final_step(self):
        grid = time_grid(0.0, 1.05, 0.1)
        self.assertEqual(len(grid), 12)
        self.assertEqual(grid[-1], 1.05)
        self.assertAlmostEqual(grid[-1] - grid[-2], 0.05)

    def test_checkpoints_hit_exactly(self):
        grid = time_grid(0.0, 1.0, 0.3, checkpoints=[0.5, 0.6])
        self.assertIn(0.5, grid.tolist())
        self.assertIn(0.6, grid.tolist())
        self.assertTrue(np.all(np.diff(grid) > 0))

    def test_invalid(self):
        with self.assertRaises(SimulationError):
            time_grid(1.0, 0.5, 0.1)
        with self.assertRaises(SimulationError):
            time_grid(0.0, 1.0, 0.1, checkpoints=[2.0])


class StepTestCase(SimpleTestCase):

    def setUp(self):
        self.interval = Interval(0.0, 1.0)
        self.rng = np.random.default_rng(21)

    def test_frozen_dynamics(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0)
        result = step(model, self.interval, 0.0, 0.3, 0.01, self.rng)
        self.assertIsNone(result.killed)
        self.assertEqual(result.position[0], 0.3)
        self.assertEqual(result.soft_clock, 0.0)

    def test_exponential_clock(self):
        rate = 1.5
        model = ConstantCoefficientModel(1, sigma_scale=0.0, rate=rate)
        batch = simulate_batch(model, self.interval, np.full((4000, 1), 0.5), 0.0, 20.0, SimParams(dt=0.01), self.rng)
        self.assertTrue(np.all(batch.status == SOFT_KILLED))
        result = stats.kstest(batch.kill_time, 'expon', args=(0.0, 1.0 / rate))
        self.assertGreater(result.pvalue, 0.01)

    def test_bridge_kill_probability(self):
        model, _ = build_model('brownian')
        n = 200000
        X = np.full((n, 1), 0.1)
        _, kind, fraction, _ = advance(
            model, self.interval, 0.0, X, 0.01, np.zeros(n), np.full(n, np.inf),
            np.zeros((n, 1)), self.rng.random(n),
        )
        self.assertAlmostEqual(np.mean(kind == HARD_KILLED), np.exp(-2.0), delta=0.003)
        np.testing.assert_allclose(fraction[kind == HARD_KILLED], 0.5)

    def test_exit_time_interpolation(self):
        model, _ = build_model('brownian')
        _, kind, fraction, _ = advance(
            model, self.interval, 0.0, np.array([[0.1]]), 0.01, np.zeros(1), np.full(1, np.inf),
            np.array([[-2.0]]), np.zeros(1),
        )
        self.assertEqual(kind[0], HARD_KILLED)
        self.assertAlmostEqual(fraction[0], 0.5)

    def test_earlier_event_wins(self):
        model = ConstantCoefficientModel(1, sigma_scale=1.0, rate=100.0)
        # soft threshold crossed after 10% of the step, exit after 50%
        _, kind, fraction, _ = advance(
            model, self.interval, 0.0, np.array([[0.1]]), 0.01, np.zeros(1), np.array([0.1]),
            np.array([[-2.0]]), np.zeros(1),
        )
        self.assertEqual(kind[0], SOFT_KILLED)
        self.assertAlmostEqual(fraction[0], 0.1)

    def test_outside_start(self):
        model, _ = build_model('brownian')
        with self.assertRaises(SimulationError):
            step(model, self.interval, 0.0, 1.5, 0.01, self.rng)


class SimulateTestCase(SimpleTestCase):

    def setUp(self):
        self.model, self.domain = build_model('brownian')

    def test_empty_interval(self):
        outcome = simulate(self.model, self.domain, 0.4, 1.0, 1.0, SimParams(dt=0.01), np.random.default_rng(0))
        self.assertTrue(outcome.alive)
        self.assertEqual(outcome.steps_taken, 0)
        np.testing.assert_array_equal(outcome.position, [0.4])

    def test_outcome_fields(self):
        rng = np.random.default_rng(1)
        outcomes = [simulate(self.model, self.domain, 0.5, 0.0, 1.0, SimParams(dt=0.01), rng) for _ in range(50)]
        for outcome in outcomes:
            if outcome.alive:
                self.assertTrue(self.domain.contains(outcome.position))
            else:
                self.assertTrue(0.0 <= outcome.time <= 1.0)
                self.assertIsNone(outcome.position)

    def test_checkpoint_snapshots(self):
        rng = np.random.default_rng(2)
        batch = simulate_batch(self.model, self.domain, np.full((500, 1), 0.5), 0.0, 0.5, SimParams(dt=0.01), rng,
                               checkpoints=[0.0, 0.25, 0.5])
        self.assertEqual([snap.time for snap in batch.snapshots], [0.0, 0.25, 0.5])
        early, late = batch.snapshot(0.25), batch.snapshot(0.5)
        self.assertTrue(np.all(early.alive >= late.alive))
        np.testing.assert_array_equal(late.alive, batch.alive)
        self.assertTrue(np.all(np.isnan(late.positions[~late.alive])))


class SurvivalEstimateTestCase(SimpleTestCase):

    def setUp(self):
        self.model, self.domain = build_model('brownian')

    def test_frozen(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0)
        estimate = estimate_survival(model, self.domain, 0.5, 0.0, 1.0, 1000, SimParams(dt=0.01))
        self.assertEqual(estimate.p_hat, 1.0)
        self.assertEqual(estimate.stderr, 0.0)

    def test_brownian_interval(self):
        estimate = estimate_survival(self.model, self.domain, 0.5, 0.0, 0.5, 20000, SimParams(dt=1e-3, seed=3))
        self.assertAlmostEqual(estimate.p_hat, ORACLE, delta=3 * estimate.stderr + 1e-3)
        self.assertEqual(estimate.alive + estimate.hard_kills + estimate.soft_kills, 20000)

    def test_constant_rate_factorizes(self):
        soft, _ = build_model('brownian_softkill', params={'rate': 2.0})
        base = estimate_survival(self.model, self.domain, 0.5, 0.0, 0.5, 40000, SimParams(dt=1e-3, seed=4))
        killed = estimate_survival(soft, self.domain, 0.5, 0.0, 0.5, 40000, SimParams(dt=1e-3, seed=5))
        self.assertAlmostEqual(killed.p_hat, ORACLE * np.exp(-1.0), delta=3 * killed.stderr + 1e-3)
        ratio = killed.p_hat / base.p_hat
        ratio_err = ratio * np.hypot(killed.stderr / killed.p_hat, base.stderr / base.p_hat)
        self.assertAlmostEqual(ratio, np.exp(-1.0), delta=3 * ratio_err)

    def test_monotone_in_time(self):
        estimates = [
            estimate_survival(self.model, self.domain, 0.5, 0.0, t, 5000, SimParams(dt=2e-3, seed=6))
            for t in (0.1, 0.2, 0.4, 0.8)
        ]
        for earlier, later in zip(estimates, estimates[1:]):
            self.assertLessEqual(later.p_hat, earlier.p_hat + 3 * np.hypot(earlier.stderr, later.stderr))

    def test_bridge_correction_dominates(self):
        bridge = estimate_survival(self.model, self.domain, 0.5, 0.0, 0.5, 100000, SimParams(dt=1e-2, seed=8))
        naive = estimate_survival(
            self.model, self.domain, 0.5, 0.0, 0.5, 100000, SimParams(dt=1e-2, seed=8, bridge_correction=False),
        )
        self.assertLess(abs(bridge.p_hat - ORACLE), abs(naive.p_hat - ORACLE))
        self.assertGreater(naive.p_hat, 1.02 * ORACLE)

    @override_settings(SIMULATION_SETTINGS={'BLOCK_SIZE': 256})
    def test_independent_of_worker_count(self):
        params = SimParams(dt=5e-3, seed=9)
        one = estimate_survival(self.model, self.domain, 0.5, 0.0, 0.3, 1000, params, workers=1)
        two = estimate_survival(self.model, self.domain, 0.5, 0.0, 0.3, 1000, params, workers=2)
        self.assertEqual(one, two)
        law = UniformLaw(self.domain)
        a = conditioned_sample(self.model, self.domain, law, 0.0, 0.3, 200, 5000, params, workers=1)
        b = conditioned_sample(self.model, self.domain, law, 0.0, 0.3, 200, 5000, params, workers=3)
        np.testing.assert_array_equal(a.points, b.points)
        self.assertEqual(a.acceptance_rate, b.acceptance_rate)

    @tag('slow')
    def test_brownian_interval_full_budget(self):
        estimate = estimate_survival(self.model, self.domain, 0.5, 0.0, 0.5, 100000, SimParams(dt=1e-3, seed=10))
        self.assertAlmostEqual(estimate.p_hat, 0.1080, delta=0.005)


class ConditionedSampleTestCase(SimpleTestCase):

    def setUp(self):
        self.model, self.domain = build_model('brownian')

    def test_frozen_point_mass(self):
        model = ConstantCoefficientModel(1, sigma_scale=0.0)
        measure = conditioned_sample(model, self.domain, 0.3, 0.0, 1.0, 100, 1000, SimParams(dt=0.01))
        np.testing.assert_array_equal(measure.points, np.full((100, 1), 0.3))
        self.assertEqual(measure.acceptance_rate, 1.0)

    def test_insufficient_survivors(self):
        with self.assertRaises(InsufficientSurvivorsError) as ctx:
            conditioned_sample(self.model, self.domain, 0.5, 0.0, 2.0, 1000, 500, SimParams(dt=0.01))
        error = ctx.exception
        self.assertLess(error.achieved, 1000)
        self.assertEqual(error.target, 1000)
        self.assertEqual(error.code, 'insufficient_survivors')

    def test_close_to_qsd(self):
        binning = Binning.regular(0.0, 1.0, 20)
        measure = conditioned_sample(
            self.model, self.domain, UniformLaw(self.domain), 0.0, 0.5, 5000, 400000, SimParams(dt=5e-3, seed=12),
        )
        self.assertEqual(measure.count, 5000)
        self.assertLessEqual(tv_distance(histogram(measure, binning), binned_qsd(binning)), 0.08)

    def test_constant_rate_leaves_conditioned_law_unchanged(self):
        binning = Binning.regular(0.0, 1.0, 10)
        plain = conditioned_sample(self.model, self.domain, 0.5, 0.0, 0.3, 10000, 200000, SimParams(dt=2e-3, seed=13))
        for seed, rate in enumerate((1.0, 2.0), start=14):
            with self.subTest(rate=rate):
                soft, _ = build_model('brownian_softkill', params={'rate': rate})
                killed = conditioned_sample(soft, self.domain, 0.5, 0.0, 0.3, 10000, 200000,
                                            SimParams(dt=2e-3, seed=seed))
                self.assertLessEqual(tv_distance(histogram(plain, binning), histogram(killed, binning)), 0.08)

    def test_horizon_conditioning(self):
        params = SimParams(dt=5e-3, seed=15)
        law = UniformLaw(self.domain)
        same = horizon_conditioned_sample(self.model, self.domain, law, 0.0, 0.3, 0.3, 300, 20000, params)
        plain = conditioned_sample(self.model, self.domain, law, 0.0, 0.3, 300, 20000, params)
        np.testing.assert_array_equal(same.points, plain.points)

        later = horizon_conditioned_sample(self.model, self.domain, law, 0.0, 0.3, 0.8, 2000, 200000, params)
        # survival to a later horizon favours the middle of the interval
        inner = np.mean(np.abs(later.points - 0.5) < 0.25)
        self.assertGreater(inner, np.mean(np.abs(plain.points - 0.5) < 0.25) - 0.05)
        self.assertGreater(inner, 0.6)

    @tag('slow')
    def test_qsd_recovery_full_budget(self):
        binning = Binning.regular(0.0, 1.0, 50)
        measure = conditioned_sample(
            self.model, self.domain, UniformLaw(self.domain), 0.0, 1.0, 10000, 3000000, SimParams(dt=2e-3, seed=16),
        )
        self.assertLessEqual(tv_distance(histogram(measure, binning), binned_qsd(binning)), 0.08)


class ProfileTestCase(SimpleTestCase):

    def test_profile_and_flat_maximum(self):
        model, domain = build_model('brownian')
        points = np.linspace(0.05, 0.95, 7).reshape(-1, 1)
        profile = survival_profile(model, domain, points, 0.0, 0.3, 2000, SimParams(dt=5e-3, seed=17))
        expected = survival_probability(points[:, 0], 0.3)
        np.testing.assert_allclose(profile.p_hat, expected, atol=4 * profile.stderr.max() + 0.01)
        diagnostic = flat_maximum_diagnostic(profile.p_hat, points)
        self.assertAlmostEqual(diagnostic['argmax'][0], 0.5, delta=0.16)
        self.assertGreater(diagnostic['r0'], 0.1)

    def test_flat_maximum_exact(self):
        values = np.array([0.1, 0.6, 1.0, 0.7, 0.2])
        points = np.array([0.0, 1.0, 2.0, 3.0, 4.0])
        diagnostic = flat_maximum_diagnostic(values, points)
        self.assertEqual(diagnostic['argmax'], [2.0])
        self.assertEqual(diagnostic['r0'], 2.0)


class InitialLawTestCase(SimpleTestCase):

    def test_laws(self):
        ball = Ball([0.0, 0.0], 1.0)
        rng = np.random.default_rng(0)
        self.assertEqual(PointMass(ball, [0.1, 0.2]).sample(3, rng).shape, (3, 2))
        self.assertTrue(np.all(ball.contains(UniformLaw(ball).sample(100, rng))))
        cloud = PointCloud(ball, [[0.1, 0.0], [0.0, 0.1]], resample=False)
        np.testing.assert_array_equal(cloud.sample(3, rng), [[0.1, 0.0], [0.0, 0.1], [0.1, 0.0]])
        with self.assertRaises(SimulationError):
            PointMass(ball, [2.0, 0.0])

    def test_descriptor(self):
        interval = Interval(0.0, 1.0)
        self.assertIsInstance(law_from_descriptor(interval, {'type': 'point', 'x': [0.2]}), PointMass)
        self.assertIsInstance(law_from_descriptor(interval, {'type': 'uniform'}), UniformLaw)
        with self.assertRaises(SimulationError):
            law_from_descriptor(interval, {'type': 'gaussian'})
