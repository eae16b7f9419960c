"""
Initial laws the estimators can draw starting points from.
"""
import numpy as np

from utils.exceptions import SimulationError


class InitialLaw:
    """Sampleable probability measure on D"""

    kind = 'law'

    def __init__(self, domain):
        self.domain = domain

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        return {'type': self.kind}


class PointMass(InitialLaw):
    kind = 'point'

    def __init__(self, domain, x):
        super().__init__(domain)
        X, _ = domain.as_points(x)
        if not domain.contains(X)[0]:
            raise SimulationError(f'Initial point {X[0].tolist()} is not inside the domain.', code='outside_domain')
        self.x = X[0]

    def sample(self, n, rng):
        return np.broadcast_to(self.x, (n, self.x.shape[0])).copy()

    def describe(self):
        return {'type': self.kind, 'x': self.x.tolist()}


class UniformLaw(InitialLaw):
    kind = 'uniform'

    def sample(self, n, rng):
        return self.domain.sample_uniform(n, rng)


class PointCloud(InitialLaw):
    """Empirical law of given points; resample=False hands them out in order, cycling"""

    kind = 'points'

    def __init__(self, domain, points, resample: bool = True):
        super().__init__(domain)
        points, _ = domain.as_points(points)
        if not np.all(domain.contains(points)):
            raise SimulationError('Every point of the initial cloud must lie inside the domain.', code='outside_domain')
        self.points = points
        self.resample = resample

    def sample(self, n, rng):
        if self.resample:
            return self.points[rng.integers(0, self.points.shape[0], size=n)]
        return self.points[np.arange(n) % self.points.shape[0]].copy()

    def describe(self):
        return {'type': self.kind, 'count': int(self.points.shape[0]), 'resample': self.resample}


def law_from_descriptor(domain, descriptor: dict) -> InitialLaw:
    """{type: point, x: [...]} | {type: uniform} | {type: points, points: [[...]], resample: bool}"""
    kind = descriptor.get('type', 'uniform')
    if kind == 'point':
        return PointMass(domain, descriptor['x'])
    if kind == 'uniform':
        return UniformLaw(domain)
    if kind == 'points':
        return PointCloud(domain, descriptor['points'], resample=descriptor.get('resample', True))
    raise SimulationError(f'Unknown initial law: {kind}', code='invalid_law')
