"""
Exception hierarchy for the simulation apps.

Every error carries a machine-readable code, mirroring DRF's APIException, so the
command-line runner can turn it into an error JSON document.
"""
from typing import Optional


class SimulationError(Exception):
    default_code = 'simulation_error'
    default_detail = 'Simulation failed.'

    def __init__(self, detail: Optional[str] = None, code: Optional[str] = None, details: Optional[dict] = None):
        self.detail = detail or self.default_detail
        self.code = code or self.default_code
        self.details = details or {}
        super().__init__(self.detail)


class DimensionMismatchError(SimulationError):
    default_code = 'dimension_mismatch'
    default_detail = 'Point dimension does not match the domain dimension.'


class NonSmoothBoundaryError(SimulationError):
    default_code = 'non_smooth_boundary'
    default_detail = 'The boundary distance is not differentiable at this point.'


class ModelEvaluationError(SimulationError):
    default_code = 'model_evaluation'
    default_detail = 'Model coefficients or proposal are not finite.'


class UnknownModelError(SimulationError):
    default_code = 'unknown_model'
    default_detail = 'No library model with this name.'


class InsufficientSurvivorsError(SimulationError):
    default_code = 'insufficient_survivors'
    default_detail = 'Replica budget exhausted before enough survivors were collected.'

    def __init__(self, achieved: int, target: int, partial=None, replicas: int = 0):
        self.achieved = achieved
        self.target = target
        self.partial = partial
        super().__init__(
            f'Collected {achieved} of {target} survivors after {replicas} replicas.',
            details={'achieved': achieved, 'target': target, 'replicas': replicas},
        )


class FlemingViotError(SimulationError):
    default_code = 'fleming_viot'
    default_detail = 'Particle system could not advance.'


class CouplingError(SimulationError):
    default_code = 'coupling'
    default_detail = 'Joint covariance is not positive semi-definite; lambda0 is too large.'


class BinningMismatchError(SimulationError):
    default_code = 'binning_mismatch'
    default_detail = 'Histograms were built on different binnings.'


class FitError(SimulationError):
    default_code = 'insufficient_points'
    default_detail = 'Insufficient points above noise floor.'


class ScenarioError(SimulationError):
    default_code = 'scenario_invalid'
    default_detail = 'Scenario file does not match the schema.'
