"""
Sampling validators for the declared model constants.

Sampling gives lower bounds on suprema, so a Lipschitz estimate above the
declared k0 is only reported as a warning; periodicity, ellipticity and the
kill-rate range are hard checks.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from utils.helpers import simulation_setting

logger = logging.getLogger(__name__)

PERIODICITY_TOL = 1e-12
ELLIPTICITY_TOL = 1e-9


@dataclass
class ValidationResult:
    check: str
    value: float
    declared: Optional[float]
    passed: bool
    severity: str  # 'error' or 'warning'
    message: str

    def as_dict(self) -> dict:
        return asdict(self)


def _sample_times(model, n: int, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, model.period, size=n)


def check_periodicity(model, domain, n_time: int, n_space: int, rng: np.random.Generator) -> float:
    """Largest ||sigma(t+P,x)-sigma(t,x)|| + |b(t+P,x)-b(t,x)| + |kappa(t+P,x)-kappa(t,x)|"""
    X = domain.sample_uniform(n_space, rng)
    worst = 0.0
    for t in _sample_times(model, n_time, rng):
        shifted = t + model.period
        dsigma = np.linalg.norm(model.diffusion(shifted, X) - model.diffusion(t, X), axis=(1, 2))
        db = np.linalg.norm(model.drift(shifted, X) - model.drift(t, X), axis=1)
        dkappa = np.abs(model.kill_rate(shifted, X) - model.kill_rate(t, X))
        worst = max(worst, float(np.max(dsigma + db + dkappa)))
    return worst


def check_ellipticity(model, domain, samples: int, rng: np.random.Generator) -> float:
    """Smallest singular value of sigma(t,x) over sampled (t,x)"""
    X = domain.sample_uniform(samples, rng)
    times = _sample_times(model, samples, rng)
    smallest = np.inf
    # one time per point, evaluated in groups sharing a time value
    for t, chunk in zip(times[::256], np.array_split(X, max(1, int(np.ceil(samples / 256))))):
        singular = np.linalg.svd(model.diffusion(t, chunk), compute_uv=False)
        smallest = min(smallest, float(singular.min()))
    if smallest < model.declared_c0 - ELLIPTICITY_TOL:
        logger.warning('Model %s: sampled ellipticity %.6g below declared c0 %.6g', model.name, smallest, model.declared_c0)
    return smallest


def estimate_lipschitz(model, domain, samples: int, rng: np.random.Generator) -> float:
    """Largest (||sigma(t,x)-sigma(t,y)|| + |b(t,x)-b(t,y)|) / |x-y| over sampled pairs.

    Half of the pairs are independent uniform points, half are close pairs that
    probe the local slope.
    """
    half = max(1, samples // 2)
    X = domain.sample_uniform(2 * half, rng)
    Y_far = domain.sample_uniform(half, rng)
    step = 1e-3 * domain.diameter
    Y_near = X[half:] + rng.normal(scale=step, size=X[half:].shape)
    # proposals that leave D collapse onto x and are skipped below
    Y_near = np.where(domain.contains(Y_near)[:, None], Y_near, X[half:])
    Y = np.concatenate([Y_far, Y_near])
    times = _sample_times(model, 2 * half, rng)

    best = 0.0
    for start in range(0, 2 * half, 256):
        stop = min(start + 256, 2 * half)
        t = times[start]
        Xs, Ys = X[start:stop], Y[start:stop]
        dist = np.linalg.norm(Xs - Ys, axis=1)
        keep = dist > 0
        if not keep.any():
            continue
        dsigma = np.linalg.norm(model.diffusion(t, Xs) - model.diffusion(t, Ys), axis=(1, 2))
        db = np.linalg.norm(model.drift(t, Xs) - model.drift(t, Ys), axis=1)
        best = max(best, float(np.max((dsigma + db)[keep] / dist[keep])))
    if best > model.declared_k0 + 1e-9:
        logger.warning('Model %s: sampled Lipschitz constant %.6g exceeds declared k0 %.6g', model.name, best, model.declared_k0)
    return best


def check_kill_rate(model, domain, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """(min, max) of kappa over sampled (t,x)"""
    X = domain.sample_uniform(samples, rng)
    times = _sample_times(model, samples, rng)
    low, high = np.inf, -np.inf
    for t, chunk in zip(times[::256], np.array_split(X, max(1, int(np.ceil(samples / 256))))):
        rates = model.kill_rate(t, chunk)
        low, high = min(low, float(rates.min())), max(high, float(rates.max()))
    return low, high


def validate_model(model, domain, samples: Optional[int] = None, seed: int = 0) -> list[ValidationResult]:
    """Run every validator and collect the results"""
    samples = samples or simulation_setting('VALIDATOR_SAMPLES', 10000)
    rng = np.random.default_rng(seed)
    side = max(1, int(np.sqrt(samples)))
    results = []

    deviation = check_periodicity(model, domain, side, side, rng)
    results.append(ValidationResult(
        check='periodicity',
        value=deviation,
        declared=model.period,
        passed=deviation <= PERIODICITY_TOL,
        severity='error',
        message=f'max periodicity deviation {deviation:.3g} (tolerance {PERIODICITY_TOL:g})',
    ))

    smallest = check_ellipticity(model, domain, samples, rng)
    results.append(ValidationResult(
        check='ellipticity',
        value=smallest,
        declared=model.declared_c0,
        passed=smallest >= model.declared_c0 - ELLIPTICITY_TOL,
        severity='error',
        message=f'min singular value {smallest:.6g} vs declared c0 {model.declared_c0:.6g}',
    ))

    slope = estimate_lipschitz(model, domain, samples, rng)
    results.append(ValidationResult(
        check='lipschitz',
        value=slope,
        declared=model.declared_k0,
        passed=slope <= model.declared_k0 + 1e-9,
        severity='warning',
        message=f'sampled Lipschitz constant {slope:.6g} vs declared k0 {model.declared_k0:.6g}',
    ))

    low, high = check_kill_rate(model, domain, samples, rng)
    results.append(ValidationResult(
        check='kill_rate',
        value=high,
        declared=model.declared_kappa_max,
        passed=low >= 0 and high <= model.declared_kappa_max + PERIODICITY_TOL,
        severity='error',
        message=f'kappa in [{low:.6g}, {high:.6g}] vs declared [0, {model.declared_kappa_max:.6g}]',
    ))

    for result in results:
        if not result.passed:
            log = logger.error if result.severity == 'error' else logger.warning
            log('Model %s failed %s check: %s', model.name, result.check, result.message)
    return results
