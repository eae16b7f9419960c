"""
Log-linear fit of a decaying total-variation curve to C exp(-gamma (t - s)).
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from utils.exceptions import FitError

logger = logging.getLogger(__name__)


@dataclass
class RateFit:
    C: float
    gamma: float
    r_squared: float
    t_lo: float
    t_hi: float
    noise_floor: float
    points_used: int

    def as_dict(self) -> dict:
        return asdict(self)


def default_noise_floor(bins_total: int, min_cloud_size: int) -> float:
    """2 sqrt(2B / (pi M)), above the statistical plateau of TV between same-law clouds.

    Sits below the cruder 3 sqrt(2B / M) bound.
    """
    return float(2.0 * np.sqrt(2.0 * bins_total / (np.pi * min_cloud_size)))


def fit_exponential(times, tv_values, noise_floor: float) -> RateFit:
    """Least-squares line through (t, log tv) over the points above noise_floor"""
    times = np.asarray(times, dtype=float)
    tv_values = np.asarray(tv_values, dtype=float)
    if times.shape != tv_values.shape:
        raise FitError('times and tv_values must have the same length.', code='invalid_fit_input')

    keep = np.isfinite(tv_values) & (tv_values > noise_floor)
    if keep.sum() < 3:
        raise FitError(
            details={'points_above_floor': int(keep.sum()), 'noise_floor': noise_floor},
        )
    excluded = int((~keep).sum())
    if excluded:
        logger.info('Rate fit excludes %d of %d points below the noise floor %.4g', excluded, keep.size, noise_floor)

    t, y = times[keep], np.log(tv_values[keep])
    line = stats.linregress(t, y)
    gamma = -float(line.slope)
    if not gamma > 0:
        raise FitError('TV curve is not decaying above the noise floor.', code='non_decaying',
                       details={'slope': float(line.slope)})
    return RateFit(
        C=float(np.exp(line.intercept)),
        gamma=gamma,
        r_squared=float(line.rvalue ** 2),
        t_lo=float(t.min()),
        t_hi=float(t.max()),
        noise_floor=float(noise_floor),
        points_used=int(keep.sum()),
    )
