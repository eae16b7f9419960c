import numpy as np
from django.test import SimpleTestCase, tag

from geometry.domains import Ball, Interval
from utils.exceptions import ModelEvaluationError, SimulationError, UnknownModelError
from .coefficients import ConstantCoefficientModel, TimePeriodicModel
from .library import LipschitzScaledDiffusion, MODEL_LIBRARY, build_model, list_models, register_model
from .serializers import DeclaredSerializer, ModelSpecSerializer
from .validators import check_ellipticity, check_kill_rate, check_periodicity, estimate_lipschitz, validate_model


class LinearDriftModel(TimePeriodicModel):
    """b = t e_1, not periodic"""

    def drift(self, t, X):
        out = np.zeros_like(X)
        out[:, 0] = t
        return out


class NonFiniteModel(TimePeriodicModel):

    def diffusion(self, t, X):
        return np.full((X.shape[0], self.dim, self.dim), np.nan)


class HalfLipschitzScaledDiffusion(LipschitzScaledDiffusion):
    """h = 1/2"""

    @staticmethod
    def h(X):
        return np.full(X.shape[0], 0.5)


class ModelEvaluationTestCase(SimpleTestCase):

    def test_brownian(self):
        model, _ = build_model('brownian', domain=Ball([0.0, 0.0], 1.0))
        b, sigma, rate = model.evaluate(0.7, [0.1, -0.2])
        np.testing.assert_array_equal(b, [0.0, 0.0])
        np.testing.assert_array_equal(sigma, np.eye(2))
        self.assertEqual(rate, 0.0)

    def test_distance_scaled_at_center(self):
        model, _ = build_model('remark1_1')
        _, sigma, _ = model.evaluate(0.0, [0.0, 0.0])
        np.testing.assert_allclose(sigma, 2.0 * np.eye(2))

    def test_rotating_drift_is_periodic(self):
        model, _ = build_model('remark1_3')
        b0, _, _ = model.evaluate(0.0, [0.1, 0.1])
        b1, _, _ = model.evaluate(model.period, [0.1, 0.1])
        np.testing.assert_allclose(b0, b1, atol=1e-15)
        np.testing.assert_allclose(b0, [0.5, 0.0])

    def test_distance_drift_vanishes_at_boundary(self):
        model, domain = build_model('remark1_2')
        X = domain.sample_uniform(10000, np.random.default_rng(0))
        size = np.linalg.norm(model.drift(0.0, X), axis=1)
        self.assertTrue(np.all(size <= domain.phi(X) * np.linalg.norm(X, axis=1) + 1e-15))

    def test_non_finite_coefficients(self):
        model = NonFiniteModel(2)
        with self.assertRaises(ModelEvaluationError):
            model.evaluate(0.0, [0.0, 0.0])

    def test_soft_kill_variants(self):
        model, _ = build_model('brownian_softkill', params={'rate': 2.0, 'variant': 'periodic'})
        self.assertEqual(model.evaluate(0.0, [0.5])[2], 2.0)
        self.assertAlmostEqual(model.evaluate(0.5, [0.5])[2], 0.0)
        self.assertTrue(model.has_soft_kill)
        with self.assertRaises(SimulationError):
            build_model('brownian_softkill', params={'variant': 'square'})

    def test_invalid_construction(self):
        with self.assertRaises(SimulationError):
            TimePeriodicModel(2, period=0.0)
        with self.assertRaises(SimulationError):
            TimePeriodicModel(2, declared_c0=0.0)
        with self.assertRaises(SimulationError):
            TimePeriodicModel(2, declared_kappa_max=-1.0)
        frozen = ConstantCoefficientModel(1, sigma_scale=0.0)
        self.assertEqual(frozen.declared_c0, 0.0)


class LibraryTestCase(SimpleTestCase):

    def test_remark_entries_present(self):
        names = [entry.name for entry in list_models()]
        for name in ('remark1_1', 'remark1_2', 'remark1_3', 'remark1_4', 'brownian', 'brownian_softkill'):
            self.assertIn(name, names)
        self.assertEqual(names, sorted(names))

    def test_unknown_model(self):
        with self.assertRaises(UnknownModelError):
            build_model('does_not_exist')

    def test_declared_overrides(self):
        model, domain = build_model('remark1_3', declared={'period': 2.0, 'k0': 0.5, 'c0': 0.9})
        self.assertEqual(model.period, 2.0)
        self.assertEqual(model.declared_k0, 0.5)
        self.assertEqual(model.declared_c0, 0.9)
        self.assertEqual(model.name, 'remark1_3')
        self.assertEqual(domain.kind, 'ball')

    def test_dimension_follows_domain(self):
        model, domain = build_model('brownian', domain=Ball(np.zeros(3), 1.0))
        self.assertEqual(model.dim, 3)

    def test_bad_params(self):
        with self.assertRaises(SimulationError):
            build_model('brownian', params={'speed': 3})

    def test_register_model(self):
        @register_model('test_drifted', default_domain=Interval(-1.0, 1.0).descriptor(), provenance='test only')
        def build(domain, drift=0.3, period=1.0):
            return ConstantCoefficientModel(domain.dim, drift=[drift], period=period)

        try:
            model, domain = build_model('test_drifted')
            np.testing.assert_allclose(model.evaluate(0.0, [0.0])[0], [0.3])
            self.assertEqual(domain.kind, 'interval')
        finally:
            MODEL_LIBRARY.pop('test_drifted')

    def test_describe_mentions_time_periodic_drift(self):
        description = MODEL_LIBRARY['remark1_3'].describe()
        text = f"{description['provenance']} {description['description']}"
        self.assertIn('time-periodic', text)


class ValidatorTestCase(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(42)

    def test_periodicity(self):
        model, domain = build_model('brownian')
        self.assertEqual(check_periodicity(model, domain, 10, 50, self.rng), 0.0)
        model, domain = build_model('remark1_3')
        self.assertLessEqual(check_periodicity(model, domain, 30, 100, self.rng), 1e-12)

    def test_periodicity_violation(self):
        domain = Ball([0.0, 0.0], 1.0)
        model = LinearDriftModel(2, period=1.5)
        self.assertAlmostEqual(check_periodicity(model, domain, 10, 10, self.rng), 1.5, places=12)

    def test_ellipticity(self):
        model, domain = build_model('brownian')
        self.assertAlmostEqual(check_ellipticity(model, domain, 500, self.rng), 1.0)
        model, domain = build_model('remark1_1')
        self.assertGreaterEqual(check_ellipticity(model, domain, 2000, self.rng), 1.0)
        domain = Ball([0.0, 0.0], 1.0)
        model = HalfLipschitzScaledDiffusion(domain)
        self.assertGreaterEqual(check_ellipticity(model, domain, 2000, self.rng), 1.0)

    def test_lipschitz(self):
        model, domain = build_model('brownian')
        self.assertEqual(estimate_lipschitz(model, domain, 500, self.rng), 0.0)
        model, domain = build_model('remark1_1')
        slope = estimate_lipschitz(model, domain, 4000, self.rng)
        self.assertGreater(slope, 0.0)
        self.assertLessEqual(slope, np.sqrt(2) + 1e-9)
        model, domain = build_model('remark1_2')
        slope = estimate_lipschitz(model, domain, 4000, self.rng)
        self.assertTrue(np.isfinite(slope))
        self.assertLessEqual(slope, 1.0 + domain.diameter)

    def test_kill_rate_range(self):
        model, domain = build_model('brownian_softkill', params={'rate': 2.0, 'variant': 'periodic'})
        low, high = check_kill_rate(model, domain, 2000, self.rng)
        self.assertGreaterEqual(low, 0.0)
        self.assertLessEqual(high, 2.0)

    def test_validate_model_reports_failures(self):
        domain = Ball([0.0, 0.0], 1.0)
        results = {r.check: r for r in validate_model(LinearDriftModel(2), domain, samples=400)}
        self.assertFalse(results['periodicity'].passed)
        self.assertTrue(results['ellipticity'].passed)

        overclaimed = ConstantCoefficientModel(2, sigma_scale=0.5)
        overclaimed.declared_c0 = 1.0
        results = {r.check: r for r in validate_model(overclaimed, domain, samples=400)}
        self.assertFalse(results['ellipticity'].passed)
        self.assertEqual(results['ellipticity'].severity, 'error')

    def test_library_passes_validators(self):
        for name in MODEL_LIBRARY:
            model, domain = build_model(name)
            for result in validate_model(model, domain, samples=2000, seed=1):
                if result.severity == 'error':
                    self.assertTrue(result.passed, msg=f'{name}: {result.message}')

    @tag('slow')
    def test_library_passes_validators_full_budget(self):
        for name in MODEL_LIBRARY:
            model, domain = build_model(name)
            results = validate_model(model, domain, samples=100000, seed=2)
            self.assertTrue(all(r.passed for r in results), msg=name)


class ModelSpecSerializerTestCase(SimpleTestCase):

    def test_valid(self):
        serializer = ModelSpecSerializer(data={'name': 'remark1_3', 'params': {'radius': 0.25}})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertEqual(serializer.validated_data['params'], {'radius': 0.25})

    def test_unknown_name(self):
        serializer = ModelSpecSerializer(data={'name': 'nope'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('name', serializer.errors)

    def test_declared(self):
        self.assertTrue(DeclaredSerializer(data={'k0': 1.0, 'period': 2.0}).is_valid())
        serializer = DeclaredSerializer(data={'c0': 0.0, 'period': -1})
        self.assertFalse(serializer.is_valid())
        self.assertIn('c0', serializer.errors)
        self.assertIn('period', serializer.errors)
