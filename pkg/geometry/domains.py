"""
Bounded domains and their boundary-distance function phi_D.

Every public method accepts either one point (shape ``(d,)``, or a scalar when
d = 1) or a cloud of points (shape ``(n, d)``) and answers in the same form.
"""
import logging
from abc import ABC, abstractmethod

import numpy as np

from utils.exceptions import DimensionMismatchError, SimulationError
from utils.helpers import simulation_setting

logger = logging.getLogger(__name__)

# Smallest positive float: interior points always get phi > 0.
_TINY = np.nextafter(0.0, 1.0)


class Domain(ABC):
    """Bounded open set D of R^d"""

    kind = 'domain'
    smooth_boundary = True

    def __init__(self, dim: int):
        if dim < 1:
            raise SimulationError('Domain dimension must be a positive integer.', code='invalid_domain')
        self.dim = int(dim)

    # -- shape specific -------------------------------------------------

    @abstractmethod
    def _interior_distance(self, X: np.ndarray) -> np.ndarray:
        """Distance to the boundary for points known to be inside D"""

    @abstractmethod
    def _level(self, X: np.ndarray) -> np.ndarray:
        """Signed level: positive inside, zero on the boundary, negative outside"""

    @abstractmethod
    def _gradient(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Unit gradient of phi_D at interior points and a validity mask"""

    @abstractmethod
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper corners of a box containing D"""

    @property
    @abstractmethod
    def inradius(self) -> float:
        """Largest value of phi_D"""

    @property
    @abstractmethod
    def diameter(self) -> float:
        pass

    @abstractmethod
    def descriptor(self) -> dict:
        """Tagged record used by scenario files"""

    # -- shared ----------------------------------------------------------

    def as_points(self, x) -> tuple[np.ndarray, bool]:
        """Return (cloud of shape (n, d), True when a single point was given)"""
        arr = np.asarray(x, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if arr.ndim == 1:
            if arr.shape[0] != self.dim:
                raise DimensionMismatchError(
                    f'Expected a {self.dim}-vector, got shape {arr.shape}.',
                    details={'expected': self.dim, 'shape': list(arr.shape)},
                )
            return arr.reshape(1, self.dim), True
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise DimensionMismatchError(
                f'Expected points of shape (n, {self.dim}), got {arr.shape}.',
                details={'expected': self.dim, 'shape': list(arr.shape)},
            )
        return arr, False

    @staticmethod
    def _unwrap(values: np.ndarray, single: bool):
        if single:
            value = values[0]
            return value.item() if np.ndim(value) == 0 else value
        return values

    def level(self, x):
        X, single = self.as_points(x)
        return self._unwrap(self._level(X), single)

    def contains(self, x):
        X, single = self.as_points(x)
        return self._unwrap(self._level(X) > 0, single)

    def phi(self, x):
        """Euclidean distance to the boundary, 0 outside D"""
        X, single = self.as_points(x)
        return self._unwrap(self._phi(X), single)

    def _phi(self, X: np.ndarray) -> np.ndarray:
        inside = self._level(X) > 0
        out = np.zeros(X.shape[0])
        if inside.any():
            out[inside] = np.maximum(self._interior_distance(X[inside]), _TINY)
        return out

    def grad_phi(self, x):
        """Unit gradient of phi_D and a mask marking where it exists"""
        X, single = self.as_points(x)
        G = np.zeros_like(X)
        valid = np.zeros(X.shape[0], dtype=bool)
        inside = self._level(X) > 0
        if inside.any():
            G[inside], valid[inside] = self._gradient(X[inside])
        if single:
            return G[0], bool(valid[0])
        return G, valid

    def collar_width(self, a: float | None = None) -> float:
        """Width of the boundary collar D^a used by diagnostics"""
        if a is not None:
            return float(a)
        return simulation_setting('COLLAR_FRACTION', 0.1) * self.inradius

    def sample_uniform(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n uniform points of D by rejection in the bounding box"""
        lower, upper = self.bounding_box()
        chunks, collected = [], 0
        while collected < n:
            batch = rng.uniform(lower, upper, size=(max(2 * (n - collected), 16), self.dim))
            batch = batch[self._level(batch) > 0]
            chunks.append(batch)
            collected += batch.shape[0]
        return np.concatenate(chunks)[:n]

    def __repr__(self):
        return f'{self.__class__.__name__}({self.descriptor()})'


class Interval(Domain):
    kind = 'interval'

    def __init__(self, a: float, b: float):
        super().__init__(1)
        if not b > a:
            raise SimulationError('Interval requires a < b.', code='invalid_domain')
        self.a, self.b = float(a), float(b)

    def _interior_distance(self, X):
        return self._level(X)

    def _level(self, X):
        x = X[:, 0]
        return np.minimum(x - self.a, self.b - x)

    def _gradient(self, X):
        x = X[:, 0]
        left, right = x - self.a, self.b - x
        G = np.where(left < right, 1.0, -1.0).reshape(-1, 1)
        return G, left != right

    def bounding_box(self):
        return np.array([self.a]), np.array([self.b])

    @property
    def inradius(self):
        return (self.b - self.a) / 2

    @property
    def diameter(self):
        return self.b - self.a

    def descriptor(self):
        return {'type': self.kind, 'a': self.a, 'b': self.b}


class Ball(Domain):
    kind = 'ball'

    def __init__(self, center, radius: float):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        super().__init__(center.shape[0])
        if not radius > 0:
            raise SimulationError('Ball radius must be positive.', code='invalid_domain')
        self.center, self.radius = center, float(radius)

    def _interior_distance(self, X):
        return self._level(X)

    def _level(self, X):
        return self.radius - np.linalg.norm(X - self.center, axis=1)

    def _gradient(self, X):
        offset = X - self.center
        norm = np.linalg.norm(offset, axis=1)
        valid = norm > 0
        G = np.zeros_like(X)
        G[valid] = -offset[valid] / norm[valid, None]
        return G, valid

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    @property
    def inradius(self):
        return self.radius

    @property
    def diameter(self):
        return 2 * self.radius

    def descriptor(self):
        return {'type': self.kind, 'center': self.center.tolist(), 'radius': self.radius}


class Ellipsoid(Domain):
    """Axis-aligned ellipsoid; phi_D via Newton on the Lagrange multiplier"""

    kind = 'ellipsoid'

    def __init__(self, center, semi_axes):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        semi_axes = np.atleast_1d(np.asarray(semi_axes, dtype=float))
        super().__init__(center.shape[0])
        if semi_axes.shape != center.shape or np.any(semi_axes <= 0):
            raise SimulationError('Ellipsoid needs one positive semi-axis per dimension.', code='invalid_domain')
        self.center, self.semi_axes = center, semi_axes
        self.tol = simulation_setting('ELLIPSOID_TOL', 1e-12)
        self.max_iter = simulation_setting('ELLIPSOID_MAX_ITER', 100)

    def _level(self, X):
        scaled = np.linalg.norm((X - self.center) / self.semi_axes, axis=1)
        return self.semi_axes.min() * (1.0 - scaled)

    def project(self, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Nearest boundary points of interior points Z (centered coordinates).

        Returns the projections and a mask of points whose nearest boundary point
        is not unique (zero component along the shortest axis).
        """
        a2 = self.semi_axes ** 2
        amin2 = a2.min()
        short = np.isclose(a2, amin2, rtol=0.0, atol=1e-15 * amin2)
        n = Z.shape[0]

        # Candidate solution at the pole mu = -amin2 (degenerate branch).
        with np.errstate(divide='ignore', invalid='ignore'):
            Y_pole = np.where(short, 0.0, a2 * Z / (a2 - amin2))
        rem = 1.0 - np.sum(np.where(short, 0.0, Y_pole ** 2 / a2), axis=1)
        degenerate = np.all(Z[:, short] == 0, axis=1) & (rem >= 0)

        mu = np.zeros(n)
        lo = np.full(n, -amin2)
        hi = np.zeros(n)
        active = ~degenerate
        for _ in range(self.max_iter):
            if not active.any():
                break
            m = mu[active, None]
            denom = a2 + m
            F = np.sum(a2 * Z[active] ** 2 / denom ** 2, axis=1) - 1.0
            dF = -2.0 * np.sum(a2 * Z[active] ** 2 / denom ** 3, axis=1)
            lo[active] = np.where(F > 0, mu[active], lo[active])
            hi[active] = np.where(F <= 0, mu[active], hi[active])
            with np.errstate(divide='ignore', invalid='ignore'):
                step = np.where(dF != 0, F / dF, 0.0)
            proposal = mu[active] - step
            outside = ~((proposal > lo[active]) & (proposal <= hi[active]))
            proposal = np.where(outside, 0.5 * (lo[active] + hi[active]), proposal)
            change = np.abs(proposal - mu[active])
            mu[active] = proposal
            idx = np.flatnonzero(active)
            active[idx[change < self.tol]] = False
        else:
            if active.any():
                logger.warning('Ellipsoid projection hit %d iterations for %d points', self.max_iter, int(active.sum()))

        Y = a2 * Z / (a2 + mu[:, None])
        if degenerate.any():
            Yd = Y_pole[degenerate]
            first_short = int(np.flatnonzero(short)[0])
            Yd[:, first_short] = np.sqrt(rem[degenerate] * amin2)
            Y[degenerate] = Yd
        return Y, degenerate

    def _interior_distance(self, X):
        Z = X - self.center
        Y, _ = self.project(Z)
        return np.linalg.norm(Z - Y, axis=1)

    def _gradient(self, X):
        Z = X - self.center
        Y, degenerate = self.project(Z)
        diff = Z - Y
        norm = np.linalg.norm(diff, axis=1)
        valid = (~degenerate) & (norm > 0)
        G = np.zeros_like(X)
        G[valid] = diff[valid] / norm[valid, None]
        return G, valid

    def bounding_box(self):
        return self.center - self.semi_axes, self.center + self.semi_axes

    @property
    def inradius(self):
        return float(self.semi_axes.min())

    @property
    def diameter(self):
        return float(2 * self.semi_axes.max())

    def descriptor(self):
        return {'type': self.kind, 'center': self.center.tolist(), 'semi_axes': self.semi_axes.tolist()}


class AxisBox(Domain):
    """Axis-aligned box. Its boundary is not C^2: runs on it are outside the stated assumptions."""

    kind = 'box'
    smooth_boundary = False

    def __init__(self, lower, upper):
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        super().__init__(lower.shape[0])
        if upper.shape != lower.shape or np.any(upper <= lower):
            raise SimulationError('Box requires lower < upper on every axis.', code='invalid_domain')
        self.lower, self.upper = lower, upper

    def _faces(self, X):
        return np.concatenate([X - self.lower, self.upper - X], axis=1)

    def _level(self, X):
        return self._faces(X).min(axis=1)

    def _interior_distance(self, X):
        return self._level(X)

    def _gradient(self, X):
        faces = self._faces(X)
        order = np.argsort(faces, axis=1)
        nearest = order[:, 0]
        rows = np.arange(X.shape[0])
        gap = faces[rows, order[:, 1]] - faces[rows, nearest]
        scale = np.max(self.upper - self.lower)
        valid = gap > 1e-12 * scale
        G = np.zeros_like(X)
        axis = nearest % self.dim
        G[rows, axis] = np.where(nearest < self.dim, 1.0, -1.0)
        return G, valid

    def bounding_box(self):
        return self.lower.copy(), self.upper.copy()

    @property
    def inradius(self):
        return float(np.min(self.upper - self.lower) / 2)

    @property
    def diameter(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def descriptor(self):
        return {'type': self.kind, 'lower': self.lower.tolist(), 'upper': self.upper.tolist(),
                'smooth_boundary': self.smooth_boundary}


DOMAIN_TYPES = {
    'interval': Interval,
    'ball': Ball,
    'ellipsoid': Ellipsoid,
    'box': AxisBox,
}


def domain_from_descriptor(descriptor: dict) -> Domain:
    """Build a Domain from a tagged record such as {type: "ball", center: [...], radius: r}"""
    kind = descriptor.get('type')
    if kind == 'interval':
        return Interval(descriptor['a'], descriptor['b'])
    if kind == 'ball':
        return Ball(descriptor['center'], descriptor['radius'])
    if kind == 'ellipsoid':
        return Ellipsoid(descriptor['center'], descriptor['semi_axes'])
    if kind == 'box':
        return AxisBox(descriptor['lower'], descriptor['upper'])
    raise SimulationError(f'Unknown domain type: {kind}', code='invalid_domain')
