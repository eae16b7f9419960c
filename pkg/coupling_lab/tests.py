import numpy as np
from django.test import SimpleTestCase, tag

from diffusions.coefficients import TimePeriodicModel
from diffusions.library import build_model, list_models
from geometry.domains import Ball
from killed_path.engine import ALIVE, SimParams
from killed_path.estimators import estimate_survival
from utils.exceptions import CouplingError
from .coupling import (
    CoupledPair,
    CouplingParams,
    PairBatch,
    check_joint_covariance,
    coupled_advance,
    coupled_step,
    coupling_matrix,
    default_lambda0,
    entry_fraction,
    k_func,
    sigma0,
    symmetric_sqrt,
    unit_direction,
)
from .estimators import (
    coupling_failure_curve,
    epsilon_sensitivity,
    estimate_coupling_failure,
    marginal_survival,
)

DISC = Ball([0.0, 0.0], 1.0)


class DiagonalModel(TimePeriodicModel):
    name = 'diagonal'

    def __init__(self):
        super().__init__(2, declared_c0=1.0)

    def diffusion(self, t, X):
        return np.broadcast_to(np.diag([1.0, 2.0]), (X.shape[0], 2, 2)).copy()


class Sigma0TestCase(SimpleTestCase):

    def setUp(self):
        self.model, _ = build_model('brownian', domain=DISC)

    def test_scalar(self):
        np.testing.assert_allclose(sigma0(self.model, 0.0, [0.1, 0.2], 0.5), np.sqrt(0.5) * np.eye(2))

    def test_diagonal(self):
        np.testing.assert_allclose(sigma0(DiagonalModel(), 0.0, [0.1, 0.2], 0.5), np.diag([np.sqrt(0.5), np.sqrt(3.5)]))

    def test_reconstruction(self):
        rng = np.random.default_rng(0)
        B = rng.standard_normal((1000, 3, 3))
        A = B @ np.swapaxes(B, 1, 2) + 0.6 * np.eye(3)
        shifted = A - 0.5 * np.eye(3)
        root = symmetric_sqrt(shifted)
        np.testing.assert_allclose(root @ root, shifted, atol=1e-10)
        np.testing.assert_allclose(root, np.swapaxes(root, 1, 2), atol=1e-12)

    def test_lambda0_too_large(self):
        with self.assertRaises(CouplingError) as ctx:
            sigma0(self.model, 0.0, [0.1, 0.2], 2.0)
        self.assertEqual(ctx.exception.code, 'lambda0_too_large')

    def test_default_lambda0(self):
        self.assertAlmostEqual(default_lambda0(self.model, DISC, samples=500), 0.5)
        self.assertAlmostEqual(default_lambda0(DiagonalModel(), DISC, samples=500), 0.5)


class CouplingMatrixTestCase(SimpleTestCase):

    def test_k_func(self):
        self.assertEqual(k_func(0.0, 1.0), 0.0)
        self.assertAlmostEqual(k_func(1.0, 1.0), 2 ** 0.25, places=5)
        self.assertAlmostEqual(k_func(1e-3, 0.0), 1e-3 ** 0.25)
        values = k_func(np.linspace(0, 5, 200), 0.7)
        self.assertTrue(np.all(np.diff(values) >= 0))

    def test_unit_direction_below_one(self):
        rng = np.random.default_rng(1)
        X, Y = rng.uniform(-1, 1, (5000, 2)), rng.uniform(-1, 1, (5000, 2))
        norms = np.linalg.norm(unit_direction(X, Y, 1.0), axis=1)
        self.assertTrue(np.all(norms < 1))
        with self.assertRaises(CouplingError):
            unit_direction([0.1, 0.1], [0.1, 0.1], 0.0)

    def test_mirror_limit(self):
        model, _ = build_model('brownian', domain=DISC)
        params = CouplingParams(lambda0=1.0)
        x, y = np.array([0.3, 0.0]), np.array([-0.2, 0.1])
        u = unit_direction(x, y, 0.0)
        np.testing.assert_allclose(coupling_matrix(model, 0.0, x, y, params), np.eye(2) - 2 * np.outer(u, u),
                                   atol=1e-12)

    def test_reflection_for_large_k(self):
        u = unit_direction([1e6, 0.0], [0.0, 0.0], 1.0)
        np.testing.assert_allclose(u, [1.0, 0.0], atol=1e-2)

    def test_joint_covariance_psd_for_library(self):
        for entry in list_models():
            model, domain = build_model(entry.name)
            params = CouplingParams(lambda0=default_lambda0(model, domain), k0=model.declared_k0)
            smallest = check_joint_covariance(model, domain, params, samples=10000)
            self.assertGreaterEqual(smallest, -1e-10, entry.name)

    def test_entry_fraction(self):
        r0 = np.array([[1.0, 0.0], [0.01, 0.0], [1.0, 1.0]])
        r1 = np.array([[-1.0, 0.0], [0.5, 0.0], [-1.0, 1.0]])
        lam = entry_fraction(r0, r1, 0.1)
        self.assertAlmostEqual(lam[0], 0.45)
        self.assertEqual(lam[1], 0.0)
        self.assertTrue(np.isnan(lam[2]))


class CoupledStepTestCase(SimpleTestCase):

    def setUp(self):
        self.model, _ = build_model('brownian', domain=DISC)
        self.params = CouplingParams(lambda0=0.5)

    def test_couples_immediately(self):
        pair = CoupledPair(y1=np.array([0.1, 0.0]), y2=np.array([0.1, 1e-6]))
        pair = coupled_step(pair, self.model, DISC, 0.0, 1e-3, self.params, np.random.default_rng(0))
        self.assertTrue(pair.coupled)
        self.assertEqual(pair.coupling_time, 0.0)
        np.testing.assert_array_equal(pair.y1, pair.y2)

    def test_equal_after_coupling(self):
        n, dt = 500, 1e-3
        epsilon = self.params.epsilon(dt)
        rng = np.random.default_rng(2)
        batch = PairBatch.start(np.tile([0.03, 0.0], (n, 1)), np.tile([-0.03, 0.0], (n, 1)), 0.0, epsilon,
                                rng.exponential(size=(n, 2)))
        for k in range(300):
            coupled_advance(self.model, DISC, batch, k * dt, dt, self.params, epsilon,
                            rng.standard_normal((n, 4)), rng.random((n, 2)))
            merged = batch.coupled
            np.testing.assert_array_equal(batch.Y1[merged], batch.Y2[merged])
            np.testing.assert_array_equal(batch.status[merged, 0], batch.status[merged, 1])
        self.assertGreater(batch.coupled.sum(), n // 3)
        self.assertTrue(np.all(batch.coupling_time[batch.coupled] <= 0.3))
        alive = batch.status == ALIVE
        self.assertTrue(np.all(DISC.contains(batch.Y1[alive[:, 0]])))

    def test_lone_survivor_keeps_moving(self):
        pair = CoupledPair(y1=np.array([0.5, 0.0]), y2=np.array([-0.5, 0.0]), status2='hard_killed', kill_time2=0.0)
        moved = coupled_step(pair, self.model, DISC, 0.0, 1e-2, self.params, np.random.default_rng(3))
        self.assertFalse(moved.coupled)
        self.assertEqual(moved.status2, 'hard_killed')
        self.assertFalse(np.array_equal(moved.y1, pair.y1))
        np.testing.assert_array_equal(moved.y2, pair.y2)


class CouplingFailureTestCase(SimpleTestCase):

    def setUp(self):
        self.model, _ = build_model('brownian', domain=DISC)

    def test_same_start(self):
        result = estimate_coupling_failure(self.model, DISC, [0.2, 0.1], [0.2, 0.1], 0.0, 0.5, 200,
                                           SimParams(dt=1e-2))
        self.assertEqual(result.p_fail, 0.0)
        self.assertEqual(result.coupled, 200)

    def test_curve_nonincreasing(self):
        curve = coupling_failure_curve(self.model, DISC, [0.05, 0.0], [-0.05, 0.0], 0.0, [0.25, 1.0, 4.0], 2000,
                                       SimParams(dt=5e-3, seed=1))
        self.assertTrue(all(a >= b for a, b in zip(curve.p_fail, curve.p_fail[1:])))
        self.assertEqual(len(curve.rows()), 3)
        self.assertEqual(curve.lambda0, 0.5)

    def test_failure_scales_with_separation(self):
        params = SimParams(dt=2e-3, seed=2)
        ratios = []
        for case, separation in enumerate((0.02, 0.05, 0.1)):
            result = estimate_coupling_failure(self.model, DISC, [separation / 2, 0.0], [-separation / 2, 0.0],
                                               0.0, 0.25, 4000, params, case=case)
            self.assertGreater(result.p_fail, 0)
            ratios.append(result.p_fail / separation)
        self.assertLessEqual(max(ratios) / min(ratios), 3.0)

    def test_marginal_fidelity(self):
        params = SimParams(dt=2e-3, seed=3)
        y1, y2 = [0.3, 0.0], [-0.3, 0.2]
        coupled = marginal_survival(self.model, DISC, y1, y2, 0.0, 0.5, 4000, params)
        for y, p, err in ((y1, coupled.p_first, coupled.stderr_first), (y2, coupled.p_second, coupled.stderr_second)):
            alone = estimate_survival(self.model, DISC, y, 0.0, 0.5, 4000, SimParams(dt=2e-3, seed=4))
            self.assertLessEqual(abs(p - alone.p_hat), 3 * np.hypot(err, alone.stderr) + 0.005)
        self.assertEqual(coupled.final_first.shape[1], 2)

    def test_epsilon_sensitivity(self):
        result = epsilon_sensitivity(self.model, DISC, [0.05, 0.0], [-0.05, 0.0], 0.0, 0.25, 3000,
                                     SimParams(dt=2e-3, seed=5))
        self.assertLessEqual(result['difference'], 4 * result['combined_stderr'] + 0.02)

    def test_invalid_coupling_params(self):
        with self.assertRaises(CouplingError):
            CouplingParams(lambda0=0.0)
        with self.assertRaises(CouplingError):
            estimate_coupling_failure(self.model, DISC, [0.1, 0.0], [0.0, 0.0], 0.0, 0.5, 10, SimParams(),
                                      CouplingParams(lambda0=1.5))

    @tag('slow')
    def test_failure_scaling_full_budget(self):
        params = SimParams(dt=1e-3, seed=6)
        ratios = []
        for case, separation in enumerate((0.02, 0.05, 0.1)):
            curve = coupling_failure_curve(self.model, DISC, [separation / 2, 0.0], [-separation / 2, 0.0], 0.0,
                                           [0.25, 1.0, 4.0], 20000, params, case=case)
            self.assertTrue(all(a >= b for a, b in zip(curve.p_fail, curve.p_fail[1:])))
            ratios.append(curve.p_fail[1] / separation)
        self.assertGreater(min(ratios), 0)
        self.assertLessEqual(max(ratios) / min(ratios), 3.0)

    @tag('slow')
    def test_marginal_fidelity_full_budget(self):
        y1, y2 = [0.3, 0.0], [-0.3, 0.2]
        coupled = marginal_survival(self.model, DISC, y1, y2, 0.0, 0.5, 20000, SimParams(dt=1e-3, seed=7))
        alone = estimate_survival(self.model, DISC, y1, 0.0, 0.5, 20000, SimParams(dt=1e-3, seed=8))
        self.assertLessEqual(abs(coupled.p_first - alone.p_hat), 3 * np.hypot(coupled.stderr_first, alone.stderr))
