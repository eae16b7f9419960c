import numpy as np
from django.test import SimpleTestCase
from scipy import integrate

from geometry.domains import Ball, Interval
from utils.exceptions import BinningMismatchError, FitError, SimulationError
from .empirical import Binning, EmpiricalMeasure, Histogram, boundary_mass, default_bins, histogram, tv_distance
from .fitting import default_noise_floor, fit_exponential
from .references import (
    SPECTRAL_GAP,
    binned_conditioned,
    binned_qsd,
    conditioned_density,
    mixing_tv,
    qsd_collar_mass,
    qsd_density,
    survival_probability,
)


class HistogramTestCase(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(5)
        self.unit = Binning.regular(0.0, 1.0, 10)

    def test_single_point(self):
        h = histogram(EmpiricalMeasure([[0.37]]), self.unit)
        self.assertEqual(h.probabilities.sum(), 1.0)
        self.assertEqual(h.probabilities[3], 1.0)

    def test_uniform_samples(self):
        h = histogram(EmpiricalMeasure(self.rng.uniform(size=(10 ** 6, 1))), self.unit)
        np.testing.assert_allclose(h.probabilities, 0.1, atol=0.001)
        self.assertAlmostEqual(h.total, 1.0, places=12)
        self.assertEqual(h.outside, 0.0)

    def test_edge_convention(self):
        h = histogram(EmpiricalMeasure([[0.2], [0.0], [1.0]]), self.unit)
        # 0.2 closes the second bin (0.1, 0.2]
        self.assertAlmostEqual(h.probabilities[1], 1 / 3)
        self.assertAlmostEqual(h.probabilities[0], 1 / 3)
        self.assertAlmostEqual(h.probabilities[9], 1 / 3)

    def test_outside_bucket(self):
        h = histogram(EmpiricalMeasure([[0.5], [1.5]]), self.unit)
        self.assertEqual(h.outside, 0.5)
        self.assertAlmostEqual(h.total, 1.0)

    def test_two_dimensional(self):
        binning = Binning.for_domain(Ball([0.0, 0.0], 1.0), 20)
        self.assertEqual(binning.shape, (20, 20))
        cloud = Ball([0.0, 0.0], 1.0).sample_uniform(5000, self.rng)
        h = histogram(EmpiricalMeasure(cloud), binning)
        self.assertAlmostEqual(h.probabilities.sum(), 1.0, places=12)
        self.assertEqual(len(h.rows()), 400)

    def test_empty_measure(self):
        with self.assertRaises(SimulationError):
            EmpiricalMeasure(np.zeros((0, 1)))

    def test_default_bins(self):
        self.assertEqual(default_bins(100, 1), 10)
        self.assertEqual(default_bins(10 ** 6, 1), 100)
        self.assertEqual(default_bins(3000, 1), 15)


class TotalVariationTestCase(SimpleTestCase):

    def setUp(self):
        self.binning = Binning.regular(0.0, 1.0, 2)

    def make(self, p):
        return Histogram(binning=self.binning, probabilities=p)

    def test_examples(self):
        h = self.make([0.6, 0.4])
        self.assertEqual(tv_distance(h, h), 0.0)
        self.assertAlmostEqual(tv_distance(h, self.make([0.5, 0.5])), 0.2)
        self.assertEqual(tv_distance(self.make([1.0, 0.0]), self.make([0.0, 1.0])), 2.0)

    def test_binning_mismatch(self):
        other = Histogram(binning=Binning.regular(0.0, 1.0, 3), probabilities=[0.2, 0.3, 0.5])
        with self.assertRaises(BinningMismatchError):
            tv_distance(self.make([0.5, 0.5]), other)

    def test_metric_properties(self):
        rng = np.random.default_rng(9)
        binning = Binning.regular(0.0, 1.0, 12)
        for _ in range(200):
            p, q, r = (Histogram(binning=binning, probabilities=rng.dirichlet(np.ones(12))) for _ in range(3))
            self.assertAlmostEqual(tv_distance(p, q), tv_distance(q, p), places=14)
            self.assertLessEqual(tv_distance(p, r), tv_distance(p, q) + tv_distance(q, r) + 1e-12)
            self.assertLessEqual(tv_distance(p, q), 2.0)

    def test_sampling_noise_decreases(self):
        rng = np.random.default_rng(13)
        binning = Binning.regular(0.0, 1.0, 20)
        values = []
        for size in (10 ** 3, 10 ** 4, 10 ** 5):
            left = histogram(EmpiricalMeasure(rng.uniform(size=(size, 1))), binning)
            right = histogram(EmpiricalMeasure(rng.uniform(size=(size, 1))), binning)
            values.append(tv_distance(left, right))
        self.assertGreater(values[0], values[1])
        self.assertGreater(values[1], values[2])

    def test_boundary_mass(self):
        interval = Interval(0.0, 1.0)
        center = EmpiricalMeasure(np.full((100, 1), 0.5))
        self.assertEqual(boundary_mass(center, interval, 0.3), 0.0)
        uniform = EmpiricalMeasure(np.random.default_rng(1).uniform(size=(100000, 1)))
        self.assertAlmostEqual(boundary_mass(uniform, interval, 0.1), 0.2, delta=0.01)
        with self.assertRaises(SimulationError):
            boundary_mass(center, interval, 0.0)


class RateFitTestCase(SimpleTestCase):

    def test_exact_exponential(self):
        t = np.linspace(0.1, 1.0, 10)
        fit = fit_exponential(t, 2.0 * np.exp(-3.0 * t), noise_floor=1e-6)
        self.assertAlmostEqual(fit.C, 2.0, places=10)
        self.assertAlmostEqual(fit.gamma, 3.0, places=10)
        self.assertAlmostEqual(fit.r_squared, 1.0, places=12)
        self.assertEqual((fit.t_lo, fit.t_hi), (0.1, 1.0))

    def test_point_below_floor_is_excluded(self):
        t = np.array([0.1, 0.2, 0.3, 0.4, 0.5])
        tv = 2.0 * np.exp(-3.0 * t)
        tv[-1] = 0.01
        fit = fit_exponential(t, tv, noise_floor=0.05)
        self.assertEqual(fit.points_used, 4)
        self.assertAlmostEqual(fit.gamma, 3.0, places=10)
        self.assertEqual(fit.t_hi, 0.4)

    def test_insufficient_points(self):
        with self.assertRaises(FitError) as ctx:
            fit_exponential([0.1, 0.2, 0.3], [1.0, 0.5, 0.01], noise_floor=0.1)
        self.assertEqual(ctx.exception.code, 'insufficient_points')

    def test_non_decaying(self):
        with self.assertRaises(FitError):
            fit_exponential([0.1, 0.2, 0.3], [0.5, 0.6, 0.7], noise_floor=0.1)

    def test_default_noise_floor(self):
        self.assertAlmostEqual(default_noise_floor(40, 3000), 2.0 * np.sqrt(80.0 / (3000.0 * np.pi)))

    def test_spectral_gap_from_reference_curve(self):
        binning = Binning.regular(0.0, 1.0, 40)
        t = np.arange(0.15, 0.5, 0.05)
        tv = [mixing_tv(0.2, 0.8, s, binning) for s in t]
        fit = fit_exponential(t, tv, noise_floor=1e-8)
        self.assertAlmostEqual(fit.gamma, SPECTRAL_GAP, delta=0.5)
        self.assertGreater(fit.r_squared, 0.99)


class DirichletReferenceTestCase(SimpleTestCase):

    def test_survival_value(self):
        self.assertAlmostEqual(float(survival_probability(0.5, 0.5)), 0.10798, places=5)
        self.assertAlmostEqual(float(survival_probability(0.5, 0.5, rate=2.0)), 0.10798 * np.exp(-1.0), places=5)

    def test_qsd(self):
        total, _ = integrate.quad(qsd_density, 0.0, 1.0)
        self.assertAlmostEqual(total, 1.0, places=10)
        self.assertAlmostEqual(qsd_collar_mass(0.05), 0.0123, places=4)
        h = binned_qsd(Binning.regular(0.0, 1.0, 50))
        self.assertAlmostEqual(h.probabilities.sum(), 1.0, places=12)
        self.assertAlmostEqual(float(h.probabilities[:25].sum()), 0.5, places=12)

    def test_conditioned_density_normalized(self):
        for x0 in (0.2, None):
            total, _ = integrate.quad(lambda x: conditioned_density(x0, 0.1, x), 0.0, 1.0)
            self.assertAlmostEqual(total, 1.0, places=8)

    def test_conditioned_law_approaches_qsd(self):
        binning = Binning.regular(0.0, 1.0, 50)
        late = binned_conditioned(0.2, 2.0, binning)
        self.assertLess(tv_distance(late, binned_qsd(binning)), 1e-10)
        early = binned_conditioned(0.2, 0.05, binning)
        self.assertGreater(tv_distance(early, binned_qsd(binning)), 0.1)

    def test_mixing_tv_asymptotics(self):
        binning = Binning.regular(0.0, 1.0, 40)
        ratio = mixing_tv(0.2, 0.8, 0.4, binning) / mixing_tv(0.2, 0.8, 0.3, binning)
        self.assertAlmostEqual(ratio, np.exp(-SPECTRAL_GAP * 0.1), delta=0.01)
