"""
Empirical measures, fixed binnings and the total-variation distance.

Total variation follows the sup_{|f| <= 1} convention, so two probability
histograms are at distance sum |p_i - q_i|, between 0 and 2.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from utils.exceptions import BinningMismatchError, SimulationError

logger = logging.getLogger(__name__)

MIN_BINS = 10
MAX_BINS = 100


class EmpiricalMeasure:
    """Equally weighted cloud of sample points"""

    def __init__(self, points, time: Optional[float] = None, acceptance_rate: Optional[float] = None):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points.reshape(-1, 1)
        if points.ndim != 2 or points.shape[0] == 0:
            raise SimulationError('An empirical measure needs at least one point.', code='empty_measure')
        self.points = points
        self.time = time
        self.acceptance_rate = acceptance_rate

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def expectation(self, f: Callable[[np.ndarray], np.ndarray]) -> float:
        """mu(f) for a vectorized test function f"""
        return float(np.mean(f(self.points)))

    def mean(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def __len__(self):
        return self.count

    def __repr__(self):
        return f'EmpiricalMeasure(count={self.count}, dim={self.dim}, time={self.time})'


@dataclass(frozen=True)
class Binning:
    """Per-axis bin edges over a bounding box"""

    edges: tuple

    @classmethod
    def regular(cls, lower, upper, bins) -> 'Binning':
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        counts = np.broadcast_to(np.atleast_1d(bins), lower.shape)
        return cls(tuple(
            tuple(np.linspace(lo, hi, int(n) + 1).tolist()) for lo, hi, n in zip(lower, upper, counts)
        ))

    @classmethod
    def for_domain(cls, domain, bins) -> 'Binning':
        lower, upper = domain.bounding_box()
        return cls.regular(lower, upper, bins)

    @property
    def dim(self) -> int:
        return len(self.edges)

    @property
    def shape(self) -> tuple:
        return tuple(len(axis) - 1 for axis in self.edges)

    @property
    def total_bins(self) -> int:
        return int(np.prod(self.shape))

    def centers(self) -> list:
        return [0.5 * (np.asarray(axis[1:]) + np.asarray(axis[:-1])) for axis in self.edges]

    def locate(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Flat bin index of every point and a mask of points inside the grid.

        Bins are right-closed, (e_i, e_i+1], except the first one which also
        holds its left edge.
        """
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        inside = np.ones(X.shape[0], dtype=bool)
        indices = []
        for axis, edges in enumerate(self.edges):
            edges = np.asarray(edges)
            idx = np.searchsorted(edges, X[:, axis], side='left') - 1
            idx = np.where(X[:, axis] == edges[0], 0, idx)
            inside &= (idx >= 0) & (idx < len(edges) - 1)
            indices.append(np.clip(idx, 0, len(edges) - 2))
        flat = np.ravel_multi_index(indices, self.shape) if indices else np.zeros(X.shape[0], dtype=int)
        return flat, inside

    def describe(self) -> dict:
        return {
            'shape': list(self.shape),
            'lower': [axis[0] for axis in self.edges],
            'upper': [axis[-1] for axis in self.edges],
        }


@dataclass
class Histogram:
    binning: Binning
    probabilities: np.ndarray
    outside: float = 0.0
    count: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=float).reshape(self.binning.shape)
        if np.any(self.probabilities < 0):
            raise SimulationError('Histogram probabilities must be non-negative.', code='invalid_histogram')

    @property
    def total(self) -> float:
        return float(self.probabilities.sum() + self.outside)

    def rows(self) -> list[dict]:
        """One record per bin (centers and probability), for CSV output"""
        centers = np.meshgrid(*self.binning.centers(), indexing='ij')
        flat_centers = [c.ravel() for c in centers]
        return [
            {**{f'x{axis}': float(flat_centers[axis][i]) for axis in range(self.binning.dim)},
             'probability': float(p)}
            for i, p in enumerate(self.probabilities.ravel())
        ]


def histogram(measure: EmpiricalMeasure, binning: Binning) -> Histogram:
    """Normalized counts of the cloud on a fixed binning"""
    if measure.count == 0:
        raise SimulationError('Cannot bin an empty measure.', code='empty_measure')
    if measure.dim != binning.dim:
        raise BinningMismatchError(f'Binning has dimension {binning.dim}, measure has {measure.dim}.')
    flat, inside = binning.locate(measure.points)
    counts = np.bincount(flat[inside], minlength=binning.total_bins)
    outside = int(measure.count - inside.sum())
    if outside:
        logger.debug('%d of %d points fall outside the binning', outside, measure.count)
    return Histogram(
        binning=binning,
        probabilities=counts / measure.count,
        outside=outside / measure.count,
        count=measure.count,
    )


def tv_distance(h1: Histogram, h2: Histogram) -> float:
    """sum |p_i - q_i| over bins, the out-of-grid bucket included"""
    if h1.binning != h2.binning:
        raise BinningMismatchError(details={'left': h1.binning.describe(), 'right': h2.binning.describe()})
    return float(np.abs(h1.probabilities - h2.probabilities).sum() + abs(h1.outside - h2.outside))


def boundary_mass(measure: EmpiricalMeasure, domain, alpha: float) -> float:
    """Fraction of the cloud in the collar phi_D < alpha"""
    if not alpha > 0:
        raise SimulationError('Collar width must be positive.', code='invalid_collar')
    return float(np.mean(domain.phi(measure.points) < alpha))


def default_bins(min_cloud_size: int, dim: int) -> int:
    """Bins per axis: ceil(M^(1/(d+2))) clamped to [10, 100]"""
    bins = int(np.ceil(max(min_cloud_size, 1) ** (1.0 / (dim + 2))))
    return int(np.clip(bins, MIN_BINS, MAX_BINS))
