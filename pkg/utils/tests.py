import json

import numpy as np
from django.test import SimpleTestCase, override_settings

from .exceptions import FitError, InsufficientSurvivorsError, ScenarioError, SimulationError
from .helpers import (
    binomial_stderr,
    create_error_response,
    create_success_response,
    format_duration,
    safe_divide,
    simulation_setting,
    to_builtin,
)


class UtilsHelpersTestCase(SimpleTestCase):
    """Tests for the shared helper functions"""

    def test_safe_divide(self):
        self.assertEqual(safe_divide(10, 2), 5.0)
        self.assertEqual(safe_divide(10, 0), 0.0)
        self.assertEqual(safe_divide(10, 0, 42.0), 42.0)
        self.assertIsNone(safe_divide(1, 0, None))
        self.assertEqual(safe_divide("10", "2"), 0.0)

    def test_binomial_stderr(self):
        self.assertEqual(binomial_stderr(0, 100), 0.0)
        self.assertEqual(binomial_stderr(100, 100), 0.0)
        self.assertAlmostEqual(binomial_stderr(50, 100), 0.05)
        self.assertEqual(binomial_stderr(3, 0), 0.0)

    def test_format_duration(self):
        self.assertEqual(format_duration(0.25), "250 ms")
        self.assertEqual(format_duration(12.34), "12.3 s")
        self.assertEqual(format_duration(125), "2 min 5 s")

    def test_to_builtin(self):
        value = {'a': np.float64(1.5), 'b': np.arange(3), 'c': (np.int64(2), float('nan')), 4: [float('inf')]}
        result = to_builtin(value)
        self.assertEqual(result, {'a': 1.5, 'b': [0, 1, 2], 'c': [2, None], '4': [None]})
        json.dumps(result)

    @override_settings(SIMULATION_SETTINGS={'BLOCK_SIZE': 128})
    def test_simulation_setting(self):
        self.assertEqual(simulation_setting('BLOCK_SIZE'), 128)
        self.assertEqual(simulation_setting('MISSING', 7), 7)

    def test_create_success_response(self):
        result = create_success_response("Scenario valid")
        self.assertEqual(result, {'success': True, 'message': 'Scenario valid'})

        result = create_success_response("Run finished", {'p_hat': np.float64(0.25)})
        self.assertEqual(result, {'success': True, 'message': 'Run finished', 'p_hat': 0.25})

    def test_create_error_response(self):
        result = create_error_response("Something went wrong")
        self.assertEqual(result, {'success': False, 'error': 'Something went wrong'})

        result = create_error_response("Bad scenario", "scenario_invalid", {'field': np.array([1.0])})
        self.assertEqual(result, {
            'success': False,
            'error': 'Bad scenario',
            'error_code': 'scenario_invalid',
            'details': {'field': [1.0]},
        })


class SimulationErrorTestCase(SimpleTestCase):

    def test_defaults(self):
        exc = FitError()
        self.assertEqual(exc.code, 'insufficient_points')
        self.assertEqual(exc.detail, 'Insufficient points above noise floor.')
        self.assertEqual(exc.details, {})
        self.assertIsInstance(exc, SimulationError)

    def test_overrides(self):
        exc = ScenarioError('broken', code='scenario_unparsable', details={'line': 3})
        self.assertEqual(str(exc), 'broken')
        self.assertEqual(exc.code, 'scenario_unparsable')
        self.assertEqual(exc.details['line'], 3)

    def test_insufficient_survivors(self):
        exc = InsufficientSurvivorsError(achieved=12, target=100, replicas=5000)
        self.assertEqual(exc.code, 'insufficient_survivors')
        self.assertEqual(exc.details, {'achieved': 12, 'target': 100, 'replicas': 5000})
        self.assertIsNone(exc.partial)
        self.assertIn('12 of 100', exc.detail)
