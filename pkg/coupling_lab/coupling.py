"""
Coupled pairs of killed diffusions.

The pair (Y1, Y2) is driven by one 2d-dimensional Gaussian increment whose
covariance is [[a(x), C], [C^T, a(y)]], a = sigma sigma^T, with the cross term

    C_t(x, y) = lambda0 (I - 2 u u^T) + sigma0(t, x) sigma0(t, y)^T,
    sigma0 = sqrt(a - lambda0 I),
    u(x, y) = k(|x - y|) (x - y) / ((k(|x - y|) + 1) |x - y|),
    k(r) = max((k0 + 1)^2 r^2 / 2, r)^(1/4).

Each coordinate taken alone is the killed diffusion. Once the separation
enters the epsilon_couple ball the pair is declared coupled and follows its
first coordinate from then on.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from killed_path.engine import ALIVE, STATUS_NAMES, advance, check_proposal, resolve_kills
from utils.exceptions import CouplingError
from utils.helpers import simulation_setting

logger = logging.getLogger(__name__)


@dataclass
class CouplingParams:
    lambda0: float
    epsilon_couple: Optional[float] = None
    k0: float = 0.0

    def __post_init__(self):
        self.lambda0 = float(self.lambda0)
        if not self.lambda0 > 0:
            raise CouplingError('lambda0 must be positive.', code='invalid_lambda0')
        if self.epsilon_couple is not None and not self.epsilon_couple > 0:
            raise CouplingError('epsilon_couple must be positive.', code='invalid_epsilon')

    def epsilon(self, dt: float) -> float:
        """epsilon_couple, defaulting to sqrt(lambda0 dt) / 4"""
        if self.epsilon_couple is not None:
            return float(self.epsilon_couple)
        return float(np.sqrt(self.lambda0 * dt) / 4.0)

    def as_dict(self, dt: Optional[float] = None) -> dict:
        data = asdict(self)
        if dt is not None:
            data['epsilon_couple'] = self.epsilon(dt)
        return data


@dataclass
class CoupledPair:
    y1: np.ndarray
    y2: np.ndarray
    status1: str = 'alive'
    status2: str = 'alive'
    kill_time1: Optional[float] = None
    kill_time2: Optional[float] = None
    coupled: bool = False
    coupling_time: Optional[float] = None
    soft_clocks: np.ndarray = field(default_factory=lambda: np.zeros(2))
    thresholds: Optional[np.ndarray] = None


@dataclass
class PairBatch:
    """Vectorized state of n coupled pairs"""

    Y1: np.ndarray
    Y2: np.ndarray
    status: np.ndarray  # (n, 2)
    kill_time: np.ndarray  # (n, 2)
    coupled: np.ndarray
    coupling_time: np.ndarray
    clock: np.ndarray  # (n, 2)
    threshold: np.ndarray  # (n, 2)

    @classmethod
    def start(cls, y1, y2, s: float, epsilon: float, threshold: np.ndarray) -> 'PairBatch':
        Y1, Y2 = np.array(y1, dtype=float), np.array(y2, dtype=float)
        n = Y1.shape[0]
        coupled = np.linalg.norm(Y1 - Y2, axis=1) < epsilon
        Y2[coupled] = Y1[coupled]
        return cls(
            Y1=Y1,
            Y2=Y2,
            status=np.zeros((n, 2), dtype=np.int8),
            kill_time=np.full((n, 2), np.nan),
            coupled=coupled,
            coupling_time=np.where(coupled, float(s), np.nan),
            clock=np.zeros((n, 2)),
            threshold=np.asarray(threshold, dtype=float).reshape(n, 2).copy(),
        )

    def __len__(self):
        return self.Y1.shape[0]

    @property
    def any_alive(self) -> np.ndarray:
        return np.any(self.status == ALIVE, axis=1)

    @property
    def failed(self) -> np.ndarray:
        """At least one coordinate alive and the pair not coupled"""
        return self.any_alive & ~self.coupled


def k_func(r, k0: float):
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError('k is defined for r >= 0.')
    value = np.maximum((k0 + 1.0) ** 2 * r ** 2 / 2.0, r) ** 0.25
    return float(value) if value.ndim == 0 else value


def unit_direction(x, y, k0: float) -> np.ndarray:
    """u(x, y), row-wise for clouds; |u| < 1"""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    diff = X - Y
    r = np.linalg.norm(diff, axis=1)
    if np.any(r == 0):
        raise CouplingError('u(x, y) is undefined on the diagonal x = y.', code='diagonal')
    k = k_func(r, k0)
    u = (k / ((k + 1.0) * r))[:, None] * diff
    return u[0] if np.ndim(x) == 1 else u


def symmetric_sqrt(A: np.ndarray, what: str = 'matrix') -> np.ndarray:
    """Symmetric PSD square root through eigh; eigenvalues below -PSD_TOL raise CouplingError"""
    tol = simulation_setting('PSD_TOL', 1e-10)
    w, V = np.linalg.eigh(A)
    scale = np.maximum(1.0, np.abs(w).max(axis=-1, keepdims=True))
    if np.any(w < -tol * scale):
        raise CouplingError(
            f'The {what} is not positive semi-definite.',
            details={'min_eigenvalue': float(w.min())},
        )
    root = np.sqrt(np.clip(w, 0.0, None))
    return (V * root[..., None, :]) @ np.swapaxes(V, -1, -2)


def _sigma0(model, t: float, X: np.ndarray, lambda0: float) -> np.ndarray:
    shifted = model.covariance(t, X) - lambda0 * np.eye(X.shape[1])
    try:
        return symmetric_sqrt(shifted, 'matrix sigma sigma^T - lambda0 I')
    except CouplingError as exc:
        raise CouplingError(
            f'lambda0={lambda0:g} is too large for model {model.name}.',
            code='lambda0_too_large',
            details={**exc.details, 'lambda0': lambda0, 't': t},
        ) from exc


def sigma0(model, t: float, x, lambda0: float) -> np.ndarray:
    """sqrt(sigma sigma^T - lambda0 I) at one point (d, d) or a cloud (n, d, d)"""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    root = _sigma0(model, t, X, lambda0)
    return root[0] if np.ndim(x) == 1 else root


def _cross(model, t: float, X: np.ndarray, Y: np.ndarray, params: CouplingParams) -> np.ndarray:
    d = X.shape[1]
    u = unit_direction(X, Y, params.k0)
    reflection = np.eye(d) - 2.0 * np.einsum('ni,nj->nij', u, u)
    s0x = _sigma0(model, t, X, params.lambda0)
    s0y = _sigma0(model, t, Y, params.lambda0)
    return params.lambda0 * reflection + s0x @ np.swapaxes(s0y, 1, 2)


def coupling_matrix(model, t: float, x, y, params: CouplingParams) -> np.ndarray:
    """C_t(x, y)"""
    X = np.atleast_2d(np.asarray(x, dtype=float))
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    C = _cross(model, t, X, Y, params)
    return C[0] if np.ndim(x) == 1 else C


def joint_covariance(model, t: float, X: np.ndarray, Y: np.ndarray, params: CouplingParams) -> np.ndarray:
    """[[a(x), C], [C^T, a(y)]] per row, shape (n, 2d, 2d)"""
    C = _cross(model, t, X, Y, params)
    top = np.concatenate([model.covariance(t, X), C], axis=2)
    bottom = np.concatenate([np.swapaxes(C, 1, 2), model.covariance(t, Y)], axis=2)
    return np.concatenate([top, bottom], axis=1)


def default_lambda0(model, domain, samples: Optional[int] = None, rng: Optional[np.random.Generator] = None) -> float:
    """Half the smallest sampled eigenvalue of sigma sigma^T"""
    samples = samples or simulation_setting('VALIDATOR_SAMPLES', 10000)
    rng = rng or np.random.default_rng(0)
    X = domain.sample_uniform(samples, rng)
    times = rng.uniform(0.0, model.period, size=samples)
    smallest = np.inf
    for t, chunk in zip(times[::256], np.array_split(X, max(1, int(np.ceil(samples / 256))))):
        smallest = min(smallest, float(np.linalg.eigvalsh(model.covariance(t, chunk)).min()))
    if not smallest > 0:
        raise CouplingError(f'Model {model.name} is degenerate; no positive lambda0 exists.', code='degenerate_model')
    return 0.5 * smallest


def _sample_pairs(domain, samples: int, rng: np.random.Generator):
    X = domain.sample_uniform(samples, rng)
    Y = domain.sample_uniform(samples, rng)
    same = np.all(X == Y, axis=1)
    Y[same] = domain.sample_uniform(int(same.sum()), rng)
    return X, Y


def check_lambda0(model, domain, params: CouplingParams, samples: Optional[int] = None,
                  rng: Optional[np.random.Generator] = None) -> float:
    """Smallest sampled eigenvalue of sigma sigma^T - lambda0 I; raises when it is not positive"""
    samples = samples or simulation_setting('VALIDATOR_SAMPLES', 10000)
    rng = rng or np.random.default_rng(0)
    X = domain.sample_uniform(samples, rng)
    times = rng.uniform(0.0, model.period, size=samples)
    smallest = np.inf
    for t, chunk in zip(times[::256], np.array_split(X, max(1, int(np.ceil(samples / 256))))):
        shifted = model.covariance(t, chunk) - params.lambda0 * np.eye(model.dim)
        smallest = min(smallest, float(np.linalg.eigvalsh(shifted).min()))
    if not smallest > 0:
        raise CouplingError(
            f'sigma sigma^T - lambda0 I is not positive definite for lambda0={params.lambda0:g}.',
            code='lambda0_too_large',
            details={'min_eigenvalue': smallest, 'lambda0': params.lambda0},
        )
    return smallest


def check_joint_covariance(model, domain, params: CouplingParams, samples: Optional[int] = None,
                           rng: Optional[np.random.Generator] = None) -> float:
    """Smallest eigenvalue of the 2d x 2d joint diffusion matrix over sampled (t, x, y)"""
    samples = samples or simulation_setting('VALIDATOR_SAMPLES', 10000)
    rng = rng or np.random.default_rng(0)
    X, Y = _sample_pairs(domain, samples, rng)
    times = rng.uniform(0.0, model.period, size=samples)
    smallest = np.inf
    for t, cx, cy in zip(times[::256], np.array_split(X, max(1, int(np.ceil(samples / 256)))),
                         np.array_split(Y, max(1, int(np.ceil(samples / 256))))):
        smallest = min(smallest, float(np.linalg.eigvalsh(joint_covariance(model, t, cx, cy, params)).min()))
    return smallest


def entry_fraction(r0: np.ndarray, r1: np.ndarray, epsilon: float) -> np.ndarray:
    """First fraction of the step at which the segment r0 -> r1 enters the epsilon ball, NaN if it never does"""
    dr = r1 - r0
    a = np.sum(dr * dr, axis=1)
    b = 2.0 * np.sum(r0 * dr, axis=1)
    c = np.sum(r0 * r0, axis=1) - epsilon ** 2
    disc = b * b - 4.0 * a * c
    out = np.full(r0.shape[0], np.nan)
    inside = c < 0
    out[inside] = 0.0
    moving = ~inside & (a > 0) & (disc >= 0)
    root = (-b[moving] - np.sqrt(disc[moving])) / (2.0 * a[moving])
    hit = (root >= 0) & (root <= 1)
    rows = np.flatnonzero(moving)[hit]
    out[rows] = root[hit]
    return out


def coupled_advance(model, domain, batch: PairBatch, t: float, h: float, params: CouplingParams, epsilon: float,
                    xi: np.ndarray, u: np.ndarray, bridge_correction: bool = True):
    """Advance every live pair of the batch by h, in place.

    xi has shape (n, 2d) and u shape (n, 2); row i of both belongs to pair i.
    Uncoupled pairs with both coordinates alive take the joint increment;
    coupled pairs and lone survivors take a marginal step.
    """
    n, d = batch.Y1.shape
    alive1 = batch.status[:, 0] == ALIVE
    alive2 = batch.status[:, 1] == ALIVE

    for column, rows in ((0, np.flatnonzero(alive1 & (batch.coupled | ~alive2))),
                         (1, np.flatnonzero(alive2 & ~alive1 & ~batch.coupled))):
        if not rows.size:
            continue
        Y = batch.Y1 if column == 0 else batch.Y2
        noise = xi[rows, :d] if column == 0 else xi[rows, d:]
        proposal, kind, fraction, new_clock = advance(
            model, domain, t, Y[rows], h, batch.clock[rows, column], batch.threshold[rows, column],
            noise, u[rows, column], bridge_correction,
        )
        _apply(batch, column, rows, proposal, kind, fraction, new_clock, t, h)

    joint = np.flatnonzero(alive1 & alive2 & ~batch.coupled)
    if joint.size:
        _joint_step(model, domain, batch, joint, t, h, params, epsilon, xi[joint], u[joint], bridge_correction)

    merged = batch.coupled
    batch.Y2[merged] = batch.Y1[merged]
    batch.status[merged, 1] = batch.status[merged, 0]
    batch.kill_time[merged, 1] = batch.kill_time[merged, 0]


def _apply(batch, column, rows, proposal, kind, fraction, new_clock, t, h):
    Y = batch.Y1 if column == 0 else batch.Y2
    batch.clock[rows, column] = new_clock
    moved = kind == ALIVE
    Y[rows[moved]] = proposal[moved]
    dead = rows[~moved]
    batch.status[dead, column] = kind[~moved]
    batch.kill_time[dead, column] = t + fraction[~moved] * h


def _joint_step(model, domain, batch, rows, t, h, params, epsilon, xi, u, bridge_correction):
    X, Y = batch.Y1[rows], batch.Y2[rows]
    d = X.shape[1]
    root = symmetric_sqrt(joint_covariance(model, t, X, Y, params), 'joint covariance')
    increment = np.sqrt(h) * np.einsum('nij,nj->ni', root, xi)

    sigma_x, sigma_y = model.diffusion(t, X), model.diffusion(t, Y)
    rate_x, rate_y = model.kill_rate(t, X), model.kill_rate(t, Y)
    P1 = X + model.drift(t, X) * h + increment[:, :d]
    P2 = Y + model.drift(t, Y) * h + increment[:, d:]
    check_proposal(model, t, X, P1, rate_x)
    check_proposal(model, t, Y, P2, rate_y)
    kind1, frac1, clock1 = resolve_kills(domain, t, X, P1, sigma_x, rate_x, h, batch.clock[rows, 0],
                                         batch.threshold[rows, 0], u[:, 0], bridge_correction)
    kind2, frac2, clock2 = resolve_kills(domain, t, Y, P2, sigma_y, rate_y, h, batch.clock[rows, 1],
                                         batch.threshold[rows, 1], u[:, 1], bridge_correction)

    lam = entry_fraction(X - Y, P1 - P2, epsilon)
    first_kill = np.minimum(np.where(kind1 == ALIVE, np.inf, frac1), np.where(kind2 == ALIVE, np.inf, frac2))
    meets = ~np.isnan(lam) & (lam < first_kill)
    if meets.any():
        batch.coupled[rows[meets]] = True
        batch.coupling_time[rows[meets]] = t + lam[meets] * h

    _apply(batch, 0, rows, P1, kind1, frac1, clock1, t, h)
    apart = ~meets
    _apply(batch, 1, rows[apart], P2[apart], kind2[apart], frac2[apart], clock2[apart], t, h)


def coupled_step(pair: CoupledPair, model, domain, t: float, dt: float, params: CouplingParams,
                 rng: np.random.Generator, bridge_correction: bool = True) -> CoupledPair:
    """One step of a single pair"""
    X1, _ = domain.as_points(pair.y1)
    X2, _ = domain.as_points(pair.y2)
    d = X1.shape[1]
    if pair.thresholds is None:
        pair.thresholds = rng.exponential(size=2)
    epsilon = params.epsilon(dt)
    batch = PairBatch.start(X1, X2, t, epsilon, pair.thresholds)
    if pair.coupled:
        batch.coupled[:] = True
        batch.coupling_time[:] = pair.coupling_time
    for column, (status, when) in enumerate(((pair.status1, pair.kill_time1), (pair.status2, pair.kill_time2))):
        if status != 'alive':
            batch.status[0, column] = {name: code for code, name in STATUS_NAMES.items()}[status]
            batch.kill_time[0, column] = when
    batch.clock[0] = pair.soft_clocks

    xi = rng.standard_normal((1, 2 * d))
    u = rng.random((1, 2))
    coupled_advance(model, domain, batch, t, dt, params, epsilon, xi, u, bridge_correction)

    def _time(value):
        return None if np.isnan(value) else float(value)

    return CoupledPair(
        y1=batch.Y1[0].copy(),
        y2=batch.Y2[0].copy(),
        status1=STATUS_NAMES[int(batch.status[0, 0])],
        status2=STATUS_NAMES[int(batch.status[0, 1])],
        kill_time1=_time(batch.kill_time[0, 0]),
        kill_time2=_time(batch.kill_time[0, 1]),
        coupled=bool(batch.coupled[0]),
        coupling_time=_time(batch.coupling_time[0]),
        soft_clocks=batch.clock[0].copy(),
        thresholds=pair.thresholds,
    )
