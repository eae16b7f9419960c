"""
Time-periodic coefficient sets (b, sigma, kappa).

Coefficients are evaluated on clouds: ``drift(t, X)`` has shape (n, d),
``diffusion(t, X)`` shape (n, d, d) and ``kill_rate(t, X)`` shape (n,). Models are
immutable once built and must stay picklable so replicas can run in worker
processes.
"""
import numpy as np

from utils.exceptions import ModelEvaluationError, SimulationError


class TimePeriodicModel:
    """Base class: standard Brownian motion without soft killing"""

    name = 'custom'
    provenance = ''

    def __init__(self, dim: int, period: float = 1.0, declared_k0: float = 0.0, declared_c0: float = 1.0,
                 declared_kappa_max: float = 0.0, allow_degenerate: bool = False):
        if dim < 1:
            raise SimulationError('Model dimension must be positive.', code='invalid_model')
        if not period > 0:
            raise SimulationError('Period must be positive.', code='invalid_model')
        if declared_c0 < 0 or (declared_c0 == 0 and not allow_degenerate):
            raise SimulationError('Declared ellipticity constant c0 must be positive.', code='invalid_model')
        if declared_kappa_max < 0:
            raise SimulationError('Declared kappa_max must be non-negative.', code='invalid_model')
        if declared_k0 < 0:
            raise SimulationError('Declared Lipschitz constant k0 must be non-negative.', code='invalid_model')
        self.dim = int(dim)
        self.period = float(period)
        self.declared_k0 = float(declared_k0)
        self.declared_c0 = float(declared_c0)
        self.declared_kappa_max = float(declared_kappa_max)

    # -- coefficients -----------------------------------------------------

    def drift(self, t: float, X: np.ndarray) -> np.ndarray:
        return np.zeros((X.shape[0], self.dim))

    def diffusion(self, t: float, X: np.ndarray) -> np.ndarray:
        return np.broadcast_to(np.eye(self.dim), (X.shape[0], self.dim, self.dim)).copy()

    def kill_rate(self, t: float, X: np.ndarray) -> np.ndarray:
        return np.zeros(X.shape[0])

    # -- derived ------------------------------------------------------------

    @property
    def has_soft_kill(self) -> bool:
        return self.declared_kappa_max > 0

    def phase(self, t: float) -> float:
        """Angle 2*pi*t/period reduced to one period"""
        return 2.0 * np.pi * np.mod(t, self.period) / self.period

    def covariance(self, t: float, X: np.ndarray) -> np.ndarray:
        sigma = self.diffusion(t, X)
        return sigma @ np.swapaxes(sigma, 1, 2)

    def evaluate(self, t: float, x) -> tuple[np.ndarray, np.ndarray, float]:
        """(drift, diffusion, rate) at one point"""
        X = np.asarray(x, dtype=float).reshape(1, self.dim)
        b = self.drift(t, X)[0]
        sigma = self.diffusion(t, X)[0]
        rate = float(self.kill_rate(t, X)[0])
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(sigma)) and np.isfinite(rate)):
            raise ModelEvaluationError(
                f'Model {self.name} returned non-finite coefficients at t={t}, x={X[0].tolist()}.',
                details={'model': self.name, 't': t, 'x': X[0].tolist()},
            )
        if rate < 0:
            raise ModelEvaluationError(f'Model {self.name} returned a negative kill rate.', details={'rate': rate})
        return b, sigma, rate

    def declared(self) -> dict:
        return {
            'k0': self.declared_k0,
            'c0': self.declared_c0,
            'kappa_max': self.declared_kappa_max,
            'period': self.period,
        }

    def describe(self) -> dict:
        return {
            'name': self.name,
            'dim': self.dim,
            'provenance': self.provenance,
            'declared': self.declared(),
        }

    def __repr__(self):
        return f'{self.__class__.__name__}(name={self.name!r}, dim={self.dim}, period={self.period})'


class ConstantCoefficientModel(TimePeriodicModel):
    """b, sigma and kappa constant in time and space.

    sigma_scale = 0 gives frozen or pure soft-kill dynamics; such models are
    degenerate and only serve as controlled test cases.
    """

    name = 'constant'

    def __init__(self, dim: int, drift=None, sigma_scale: float = 1.0, rate: float = 0.0, period: float = 1.0):
        super().__init__(
            dim,
            period=period,
            declared_k0=0.0,
            declared_c0=abs(sigma_scale),
            declared_kappa_max=rate,
            allow_degenerate=True,
        )
        self.drift_vector = np.zeros(dim) if drift is None else np.asarray(drift, dtype=float).reshape(dim)
        self.sigma_scale = float(sigma_scale)
        self.rate = float(rate)

    def drift(self, t, X):
        return np.broadcast_to(self.drift_vector, X.shape).copy()

    def diffusion(self, t, X):
        return np.broadcast_to(self.sigma_scale * np.eye(self.dim), (X.shape[0], self.dim, self.dim)).copy()

    def kill_rate(self, t, X):
        return np.full(X.shape[0], self.rate)
