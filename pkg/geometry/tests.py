import numpy as np
from django.test import SimpleTestCase

from diffusions.library import MODEL_LIBRARY, build_model
from utils.exceptions import DimensionMismatchError, NonSmoothBoundaryError, SimulationError
from .crossing import bridge_survival_probability, normal_diffusivity, normal_diffusivity_batch
from .domains import AxisBox, Ball, Ellipsoid, Interval, domain_from_descriptor
from .serializers import DomainSerializer


class DomainTestCase(SimpleTestCase):
    """Membership and boundary distance for every supported shape"""

    def setUp(self):
        self.rng = np.random.default_rng(7)
        self.domains = [
            Interval(0.0, 1.0),
            Ball([0.0, 0.0], 1.0),
            Ball([0.5, -0.5, 1.0], 2.0),
            Ellipsoid([0.0, 0.0], [2.0, 1.0]),
            Ellipsoid([1.0, 0.0, 0.0], [1.0, 3.0, 2.0]),
            AxisBox([0.0, 0.0], [2.0, 1.0]),
        ]

    def test_contains(self):
        ball = Ball(np.zeros(3), 1.0)
        self.assertTrue(ball.contains([0.0, 0.0, 0.0]))
        self.assertFalse(ball.contains([1.0, 0.0, 0.0]))
        self.assertTrue(Interval(0.0, 1.0).contains(0.5))
        self.assertFalse(Interval(0.0, 1.0).contains(0.0))

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionMismatchError):
            Ball([0.0, 0.0], 1.0).contains([0.0, 0.0, 0.0])
        with self.assertRaises(DimensionMismatchError):
            Interval(0.0, 1.0).phi(np.zeros((4, 2)))

    def test_phi_examples(self):
        self.assertEqual(Ball([0.0, 0.0], 1.0).phi([0.0, 0.0]), 1.0)
        self.assertAlmostEqual(Interval(0.0, 1.0).phi(0.25), 0.25)
        self.assertAlmostEqual(Ellipsoid([0.0, 0.0], [2.0, 1.0]).phi([0.0, 0.0]), 1.0, places=12)
        self.assertEqual(Interval(0.0, 1.0).phi(1.5), 0.0)
        self.assertAlmostEqual(AxisBox([0.0, 0.0], [2.0, 1.0]).phi([1.5, 0.5]), 0.5)

    def test_ellipsoid_matches_brute_force(self):
        """Projection agrees with a dense boundary parameterization"""
        ellipsoid = Ellipsoid([0.0, 0.0], [2.0, 1.0])
        theta = np.linspace(0.0, 2 * np.pi, 400001)
        boundary = np.stack([2.0 * np.cos(theta), np.sin(theta)], axis=1)
        points = np.vstack([
            ellipsoid.sample_uniform(50, self.rng),
            [[1.5, 0.0], [0.5, 0.0], [0.0, 0.5], [1.9, 0.1]],
        ])
        phi = ellipsoid.phi(points)
        for x, value in zip(points, phi):
            expected = np.min(np.linalg.norm(boundary - x, axis=1))
            self.assertAlmostEqual(value, expected, places=6)

    def test_phi_is_one_lipschitz(self):
        for domain in self.domains:
            lower, upper = domain.bounding_box()
            X = self.rng.uniform(lower - 0.1, upper + 0.1, size=(10000, domain.dim))
            Y = self.rng.uniform(lower - 0.1, upper + 0.1, size=(10000, domain.dim))
            gap = np.abs(domain.phi(X) - domain.phi(Y))
            dist = np.linalg.norm(X - Y, axis=1)
            self.assertTrue(np.all(gap <= dist + 1e-9), msg=domain.kind)

    def test_contains_phi_consistency_near_boundary(self):
        for domain in self.domains:
            X = domain.sample_uniform(2000, self.rng)
            phi = domain.phi(X)
            np.testing.assert_array_equal(domain.contains(X), phi > 0)

        interval = Interval(0.0, 1.0)
        near = np.array([[1e-12], [1.0 - 1e-12], [-1e-12], [1.0 + 1e-12]])
        np.testing.assert_array_equal(interval.contains(near), [True, True, False, False])
        np.testing.assert_array_equal(interval.phi(near) > 0, [True, True, False, False])

        ball = Ball([0.0, 0.0], 1.0)
        directions = self.rng.normal(size=(500, 2))
        directions /= np.linalg.norm(directions, axis=1)[:, None]
        for radius in (1.0 - 1e-12, 1.0 + 1e-12):
            X = radius * directions
            np.testing.assert_array_equal(ball.contains(X), ball.phi(X) > 0)

    def test_grad_phi(self):
        G, valid = Ball([0.0, 0.0], 1.0).grad_phi([0.5, 0.0])
        self.assertTrue(valid)
        np.testing.assert_allclose(G, [-1.0, 0.0])
        _, valid = Ball([0.0, 0.0], 1.0).grad_phi([0.0, 0.0])
        self.assertFalse(valid)
        _, valid = Interval(0.0, 1.0).grad_phi(0.5)
        self.assertFalse(valid)

    def test_sample_uniform_inside(self):
        for domain in self.domains:
            X = domain.sample_uniform(1000, self.rng)
            self.assertEqual(X.shape, (1000, domain.dim))
            self.assertTrue(np.all(domain.contains(X)))

    def test_collar_width(self):
        self.assertAlmostEqual(Ball([0.0, 0.0], 2.0).collar_width(), 0.2)
        self.assertEqual(Ball([0.0, 0.0], 2.0).collar_width(0.05), 0.05)

    def test_descriptor_round_trip(self):
        for domain in self.domains:
            rebuilt = domain_from_descriptor(domain.descriptor())
            self.assertEqual(rebuilt.descriptor(), domain.descriptor())

    def test_box_descriptor_flags_corners(self):
        self.assertIs(AxisBox([0.0, 0.0], [1.0, 1.0]).descriptor()['smooth_boundary'], False)
        self.assertNotIn('smooth_boundary', Ball([0.0, 0.0], 1.0).descriptor())

    def test_invalid_shapes(self):
        with self.assertRaises(SimulationError):
            Interval(1.0, 0.0)
        with self.assertRaises(SimulationError):
            Ball([0.0], -1.0)
        with self.assertRaises(SimulationError):
            Ellipsoid([0.0, 0.0], [1.0])
        with self.assertRaises(SimulationError):
            domain_from_descriptor({'type': 'torus'})


class BridgeCrossingTestCase(SimpleTestCase):
    """Half-space bridge correction"""

    def test_boundary_start(self):
        self.assertEqual(bridge_survival_probability(0.0, 0.3, 0.01, 1.0), 0.0)
        self.assertEqual(bridge_survival_probability(0.3, 0.0, 0.01, 1.0), 0.0)

    def test_closed_form(self):
        value = bridge_survival_probability(0.1, 0.1, 0.01, 1.0)
        self.assertAlmostEqual(value, 1.0 - np.exp(-2.0), places=12)
        self.assertAlmostEqual(value, 0.864665, places=6)

    def test_no_normal_diffusion(self):
        self.assertEqual(bridge_survival_probability(0.1, 0.2, 0.01, 0.0), 1.0)

    def test_monotonicity(self):
        grid = np.linspace(0.01, 0.5, 40)
        in_phi = bridge_survival_probability(grid, 0.1, 0.01, 1.0)
        self.assertTrue(np.all(np.diff(in_phi) >= 0))
        in_dt = bridge_survival_probability(0.1, 0.1, grid, 1.0)
        self.assertTrue(np.all(np.diff(in_dt) <= 0))
        in_s2 = bridge_survival_probability(0.1, 0.1, 0.01, grid)
        self.assertTrue(np.all(np.diff(in_s2) <= 0))
        self.assertTrue(np.all(in_phi < 1.0))

    def test_large_separation_tends_to_one(self):
        values = bridge_survival_probability(np.array([0.5, 1.0, 2.0]), 1.0, 0.01, 1.0)
        self.assertTrue(np.all(np.diff(values) >= 0))
        self.assertAlmostEqual(values[-1], 1.0)

    def test_against_discretized_bridges(self):
        """Fine-step Brownian bridges between 0.1 and 0.1 stay positive with probability 1 - e^-2"""
        rng = np.random.default_rng(11)
        n, steps, dt = 20000, 400, 0.01
        h = dt / steps
        increments = rng.normal(scale=np.sqrt(h), size=(n, steps))
        W = np.cumsum(increments, axis=1)
        s = np.arange(1, steps + 1) * h
        bridge = 0.1 + W - (s / dt) * W[:, -1:]
        survived = np.mean(np.all(bridge > 0, axis=1))
        # discrete monitoring shifts the barrier outwards by about 0.5826 sqrt(h)
        shifted = 0.1 + 0.5826 * np.sqrt(h)
        self.assertAlmostEqual(survived, bridge_survival_probability(shifted, shifted, dt, 1.0), delta=0.01)
        self.assertGreater(survived, 1.0 - np.exp(-2.0) - 0.01)


class NormalDiffusivityTestCase(SimpleTestCase):

    def test_identity_diffusion(self):
        model, domain = build_model('brownian', domain=Ball([0.0, 0.0], 1.0))
        self.assertAlmostEqual(normal_diffusivity(domain, model, 0.0, [0.3, 0.4]), 1.0)

    def test_distance_scaled_diffusion(self):
        model, domain = build_model('remark1_1')
        self.assertAlmostEqual(normal_diffusivity(domain, model, 0.0, [0.9, 0.0]), 1.21)

    def test_non_smooth_point(self):
        box = AxisBox([0.0, 0.0], [1.0, 1.0])
        model, box = build_model('brownian', domain=box)
        with self.assertRaises(NonSmoothBoundaryError):
            normal_diffusivity(box, model, 0.0, [0.1, 0.1])

    def test_batch_falls_back_to_spectral_norm(self):
        box = AxisBox([0.0, 0.0], [1.0, 1.0])
        X = np.array([[0.1, 0.1], [0.1, 0.5]])
        sigma = np.broadcast_to(np.diag([1.0, 3.0]), (2, 2, 2)).copy()
        s2 = normal_diffusivity_batch(box, 0.0, X, sigma)
        np.testing.assert_allclose(s2, [9.0, 1.0])

    def test_lower_bound_by_ellipticity(self):
        rng = np.random.default_rng(3)
        for name in MODEL_LIBRARY:
            model, domain = build_model(name)
            X = domain.sample_uniform(10000, rng)
            X = X[domain.phi(X) < domain.collar_width()]
            G, valid = domain.grad_phi(X)
            X = X[valid]
            s2 = normal_diffusivity_batch(domain, 0.3, X, model.diffusion(0.3, X))
            self.assertGreaterEqual(s2.min(), model.declared_c0 ** 2 - 1e-9, msg=name)


class DomainSerializerTestCase(SimpleTestCase):

    def test_valid_ball(self):
        serializer = DomainSerializer(data={'type': 'ball', 'center': [0, 0], 'radius': 1})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        domain = serializer.save()
        self.assertIsInstance(domain, Ball)
        self.assertEqual(domain.dim, 2)

    def test_missing_field(self):
        serializer = DomainSerializer(data={'type': 'interval', 'a': 0})
        self.assertFalse(serializer.is_valid())
        self.assertIn('b', serializer.errors)

    def test_invalid_geometry(self):
        serializer = DomainSerializer(data={'type': 'box', 'lower': [0, 0], 'upper': [1, -1]})
        self.assertFalse(serializer.is_valid())
        self.assertIn('non_field_errors', serializer.errors)

    def test_unknown_type(self):
        serializer = DomainSerializer(data={'type': 'mesh'})
        self.assertFalse(serializer.is_valid())
        self.assertIn('type', serializer.errors)
