"""
Closed-form references for Brownian motion (generator Laplacian / 2) killed at
the ends of (0, 1).

The Dirichlet eigenpairs are sqrt(2) sin(k pi x) and k^2 pi^2 / 2, so every
quantity below is an eigenseries truncated once the tail drops under double
precision.
"""
import numpy as np

from .empirical import Binning, Histogram

SPECTRAL_GAP = 3.0 * np.pi ** 2 / 2.0
PRINCIPAL_EIGENVALUE = np.pi ** 2 / 2.0


def _modes(t: float, minimum: int = 50) -> np.ndarray:
    """Mode numbers k = 1..K with exp(-k^2 pi^2 t / 2) negligible beyond K"""
    if t <= 0:
        raise ValueError('The eigenseries needs t > 0.')
    count = int(np.ceil(np.sqrt(80.0 / (np.pi ** 2 * t)))) + 10
    return np.arange(1, max(count, minimum) + 1)


def _check_unit_binning(binning: Binning):
    if binning.dim != 1 or binning.edges[0][0] < 0.0 or binning.edges[0][-1] > 1.0:
        raise ValueError('Reference histograms live on a one-dimensional binning of [0, 1].')


def survival_probability(x, t: float, rate: float = 0.0):
    """P_x(tau > t) = sum over odd k of 4/(k pi) sin(k pi x) exp(-k^2 pi^2 t / 2), times exp(-rate t)"""
    x = np.asarray(x, dtype=float)
    if t == 0:
        return np.where((x > 0) & (x < 1), 1.0, 0.0)
    k = _modes(t)
    k = k[k % 2 == 1]
    terms = (4.0 / (k * np.pi)) * np.exp(-k ** 2 * np.pi ** 2 * t / 2.0)
    values = np.sin(np.multiply.outer(x, k * np.pi)) @ terms
    return values * np.exp(-rate * t)


def qsd_density(x):
    x = np.asarray(x, dtype=float)
    return np.where((x >= 0) & (x <= 1), np.pi / 2.0 * np.sin(np.pi * x), 0.0)


def qsd_cdf(x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    return (1.0 - np.cos(np.pi * x)) / 2.0


def qsd_collar_mass(alpha: float) -> float:
    """QSD mass of [0, alpha) and (1 - alpha, 1]"""
    return float(2.0 * qsd_cdf(min(alpha, 0.5)))


def _initial_coefficients(k: np.ndarray, x0) -> np.ndarray:
    """<initial law, sqrt(2) sin(k pi .)> / sqrt(2); x0 = None stands for the uniform law"""
    if x0 is None:
        return (1.0 - np.cos(k * np.pi)) / (k * np.pi)
    return np.sin(k * np.pi * x0)


def conditioned_density(x0, t: float, x):
    """Density at x of the law at time t conditioned on survival, started at x0 (None = uniform)"""
    k = _modes(t)
    weights = 2.0 * _initial_coefficients(k, x0) * np.exp(-k ** 2 * np.pi ** 2 * t / 2.0)
    raw = np.sin(np.multiply.outer(np.asarray(x, dtype=float), k * np.pi)) @ weights
    mass = np.sum(weights * (1.0 - np.cos(k * np.pi)) / (k * np.pi))
    return raw / mass


def binned_conditioned(x0, t: float, binning: Binning) -> Histogram:
    """Exact bin probabilities of the conditioned law at time t"""
    _check_unit_binning(binning)
    edges = np.asarray(binning.edges[0])
    k = _modes(t)
    weights = 2.0 * _initial_coefficients(k, x0) * np.exp(-k ** 2 * np.pi ** 2 * t / 2.0)
    cos_edges = np.cos(np.multiply.outer(edges, k * np.pi))
    integrals = (cos_edges[:-1] - cos_edges[1:]) / (k * np.pi)
    raw = integrals @ weights
    mass = np.sum(weights * (1.0 - np.cos(k * np.pi)) / (k * np.pi))
    probabilities = np.clip(raw / mass, 0.0, None)
    return Histogram(binning=binning, probabilities=probabilities / probabilities.sum(), meta={'reference': 'conditioned'})


def binned_qsd(binning: Binning) -> Histogram:
    _check_unit_binning(binning)
    cdf = qsd_cdf(np.asarray(binning.edges[0]))
    return Histogram(binning=binning, probabilities=np.diff(cdf), meta={'reference': 'qsd'})


def mixing_tv(x_left: float, x_right: float, t: float, binning: Binning) -> float:
    """Binned TV between the conditioned laws started at x_left and x_right"""
    left = binned_conditioned(x_left, t, binning)
    right = binned_conditioned(x_right, t, binning)
    return float(np.abs(left.probabilities - right.probabilities).sum())
