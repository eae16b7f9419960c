"""
Euler-Maruyama simulation of killed diffusions.

Hard killing: the proposal leaves D, or the Brownian bridge between the two
endpoints crosses the boundary (half-space approximation along the inward
normal). Soft killing: the integrated rate, accumulated with the left-endpoint
rule, reaches an Exp(1) threshold drawn once per path. When both fire in the
same step the earlier interpolated event time wins.
"""
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from geometry.crossing import bridge_survival_probability, normal_diffusivity_batch
from utils.exceptions import ModelEvaluationError, SimulationError
from utils.helpers import simulation_setting

logger = logging.getLogger(__name__)

ALIVE = 0
HARD_KILLED = 1
SOFT_KILLED = 2

STATUS_NAMES = {ALIVE: 'alive', HARD_KILLED: 'hard_killed', SOFT_KILLED: 'soft_killed'}

# beyond this exponent the bridge survival probability rounds to 1
_BRIDGE_CUTOFF = 50.0


@dataclass
class SimParams:
    dt: Optional[float] = None
    bridge_correction: bool = True
    seed: int = 0
    stream_policy: str = 'philox-block'

    def __post_init__(self):
        if self.dt is None:
            self.dt = simulation_setting('DEFAULT_DT', 1e-3)
        self.dt = float(self.dt)
        if not self.dt > 0:
            raise SimulationError('Time step dt must be positive.', code='invalid_dt')
        self.seed = int(self.seed)

    def check_against(self, model):
        if self.dt > model.period / 10:
            logger.warning('dt=%g exceeds a tenth of the period %g of model %s', self.dt, model.period, model.name)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepResult:
    position: Optional[np.ndarray]
    killed: Optional[str]
    event_time: Optional[float]
    soft_clock: float


@dataclass
class PathOutcome:
    status: str
    position: Optional[np.ndarray]
    time: Optional[float]
    steps_taken: int

    @property
    def alive(self) -> bool:
        return self.status == 'alive'


@dataclass
class Snapshot:
    time: float
    positions: np.ndarray  # NaN rows for killed paths
    alive: np.ndarray


@dataclass
class BatchResult:
    status: np.ndarray
    positions: np.ndarray
    kill_time: np.ndarray
    steps_taken: np.ndarray
    snapshots: list = field(default_factory=list)

    @property
    def alive(self) -> np.ndarray:
        return self.status == ALIVE

    def __len__(self):
        return self.status.shape[0]

    def outcome(self, i: int) -> PathOutcome:
        alive = self.status[i] == ALIVE
        return PathOutcome(
            status=STATUS_NAMES[int(self.status[i])],
            position=self.positions[i].copy() if alive else None,
            time=None if alive else float(self.kill_time[i]),
            steps_taken=int(self.steps_taken[i]),
        )

    def snapshot(self, time: float) -> Snapshot:
        for snap in self.snapshots:
            if snap.time == time:
                return snap
        raise KeyError(time)


def time_grid(s: float, t: float, dt: float, checkpoints: Iterable[float] = ()) -> np.ndarray:
    """Regular grid s, s+dt, ... closed by a partial step at t, with every checkpoint hit exactly"""
    if t < s:
        raise SimulationError(f'End time {t} precedes start time {s}.', code='invalid_times')
    marks = sorted({float(c) for c in checkpoints} | {float(t)})
    if marks[0] < s or marks[-1] > t:
        raise SimulationError('Checkpoints must lie in [s, t].', code='invalid_checkpoints',
                              details={'checkpoints': marks, 's': s, 't': t})
    if t == s:
        return np.array([float(s)])
    count = int(np.ceil((t - s) / dt - 1e-9))
    grid = s + dt * np.arange(count)
    marks = np.asarray(marks)
    keep = np.all(np.abs(grid[:, None] - marks[None, :]) > 1e-9 * dt, axis=1)
    return np.unique(np.concatenate([grid[keep], marks]))


def check_proposal(model, t: float, X: np.ndarray, proposal: np.ndarray, rate: np.ndarray):
    finite = np.all(np.isfinite(proposal), axis=1)
    if not finite.all():
        row = int(np.flatnonzero(~finite)[0])
        raise ModelEvaluationError(
            f'Model {model.name} produced a non-finite proposal at t={t}.',
            details={'t': t, 'x': X[row].tolist()},
        )
    if not np.all(np.isfinite(rate)) or np.any(rate < 0):
        raise ModelEvaluationError(f'Model {model.name} returned an invalid kill rate at t={t}.', details={'t': t})


def resolve_kills(domain, t: float, X: np.ndarray, proposal: np.ndarray, sigma: np.ndarray, rate: np.ndarray,
                  dt: float, clock: np.ndarray, threshold: np.ndarray, u: np.ndarray, bridge_correction: bool = True):
    """Kill kind per row, event fraction of the step and updated soft clocks"""
    n = X.shape[0]
    kind = np.zeros(n, dtype=np.int8)
    fraction = np.ones(n)

    level0 = domain.level(X)
    level1 = domain.level(proposal)
    exited = level1 <= 0
    if exited.any():
        kind[exited] = HARD_KILLED
        fraction[exited] = level0[exited] / (level0[exited] - level1[exited])

    if bridge_correction:
        inside = np.flatnonzero(~exited)
        phi0 = domain.phi(X[inside])
        phi1 = domain.phi(proposal[inside])
        bound = np.sum(sigma[inside] ** 2, axis=(1, 2))
        near = 2.0 * phi0 * phi1 < _BRIDGE_CUTOFF * bound * dt
        if near.any():
            rows = inside[near]
            s2 = normal_diffusivity_batch(domain, t, X[rows], sigma[rows])
            survive = bridge_survival_probability(phi0[near], phi1[near], dt, s2)
            crossed = u[rows] >= survive
            kind[rows[crossed]] = HARD_KILLED
            fraction[rows[crossed]] = phi0[near][crossed] / (phi0[near][crossed] + phi1[near][crossed])

    increment = rate * dt
    new_clock = clock + increment
    soft = np.flatnonzero(new_clock >= threshold)
    if soft.size:
        soft_fraction = np.divide(threshold[soft] - clock[soft], increment[soft],
                                  out=np.zeros(soft.size), where=increment[soft] > 0)
        soft_fraction = np.clip(soft_fraction, 0.0, 1.0)
        wins = (kind[soft] == ALIVE) | (soft_fraction < fraction[soft])
        kind[soft[wins]] = SOFT_KILLED
        fraction[soft[wins]] = soft_fraction[wins]
    return kind, fraction, new_clock


def advance(model, domain, t: float, X: np.ndarray, dt: float, clock: np.ndarray, threshold: np.ndarray,
            xi: np.ndarray, u: np.ndarray, bridge_correction: bool = True):
    """One step for a cloud of live paths.

    Returns (proposals, kill kind per row, event fraction of the step, updated
    soft clocks). The noise xi (n, d) and the uniforms u (n,) are supplied by the
    caller so every row owns fixed draws.
    """
    drift = model.drift(t, X)
    sigma = model.diffusion(t, X)
    rate = model.kill_rate(t, X)
    proposal = X + drift * dt + np.sqrt(dt) * np.einsum('nij,nj->ni', sigma, xi)
    check_proposal(model, t, X, proposal, rate)
    kind, fraction, new_clock = resolve_kills(
        domain, t, X, proposal, sigma, rate, dt, clock, threshold, u, bridge_correction,
    )
    return proposal, kind, fraction, new_clock


def step(model, domain, t: float, x, dt: float, rng: np.random.Generator, soft_clock: float = 0.0,
         threshold: Optional[float] = None, bridge_correction: bool = True) -> StepResult:
    """Advance a single path by dt"""
    X, _ = domain.as_points(x)
    if not domain.contains(X)[0]:
        raise SimulationError(f'Start point {X[0].tolist()} is not inside the domain.', code='outside_domain')
    if threshold is None:
        threshold = rng.exponential()
    xi = rng.standard_normal((1, domain.dim))
    u = rng.random(1)
    proposal, kind, fraction, clock = advance(
        model, domain, t, X, dt, np.array([soft_clock]), np.array([threshold]), xi, u, bridge_correction,
    )
    if kind[0] == ALIVE:
        return StepResult(position=proposal[0], killed=None, event_time=None, soft_clock=float(clock[0]))
    return StepResult(
        position=None,
        killed='hard' if kind[0] == HARD_KILLED else 'soft',
        event_time=float(t + fraction[0] * dt),
        soft_clock=float(clock[0]),
    )


def simulate_batch(model, domain, X0, s: float, t: float, params: SimParams, rng: np.random.Generator,
                   checkpoints: Iterable[float] = ()) -> BatchResult:
    """Simulate independent killed paths from the rows of X0 over [s, t].

    Positions at every checkpoint are recorded exactly; killed paths show NaN
    there. Only live rows consume random numbers, in row order.
    """
    X, _ = domain.as_points(X0)
    X = X.copy()
    n, d = X.shape
    if not np.all(domain.contains(X)):
        raise SimulationError('Every starting point must lie inside the domain.', code='outside_domain')

    status = np.zeros(n, dtype=np.int8)
    kill_time = np.full(n, np.nan)
    steps = np.zeros(n, dtype=np.int64)
    clock = np.zeros(n)
    threshold = rng.exponential(size=n)

    marks = {float(c) for c in checkpoints}
    grid = time_grid(s, t, params.dt, marks)
    snapshots = []

    def record(time):
        alive = status == ALIVE
        snapshots.append(Snapshot(time=time, positions=np.where(alive[:, None], X, np.nan), alive=alive))

    if float(grid[0]) in marks:
        record(float(grid[0]))
    for t0, t1 in zip(grid[:-1], grid[1:]):
        live = np.flatnonzero(status == ALIVE)
        if live.size:
            h = float(t1 - t0)
            xi = rng.standard_normal((live.size, d))
            u = rng.random(live.size)
            proposal, kind, fraction, new_clock = advance(
                model, domain, float(t0), X[live], h, clock[live], threshold[live], xi, u, params.bridge_correction,
            )
            steps[live] += 1
            clock[live] = new_clock
            moved = kind == ALIVE
            X[live[moved]] = proposal[moved]
            dead = live[~moved]
            status[dead] = kind[~moved]
            kill_time[dead] = t0 + fraction[~moved] * h
        if float(t1) in marks:
            record(float(t1))

    return BatchResult(status=status, positions=X, kill_time=kill_time, steps_taken=steps, snapshots=snapshots)


def simulate(model, domain, x, s: float, t: float, params: SimParams, rng: np.random.Generator) -> PathOutcome:
    """One killed path from x over [s, t]"""
    X, _ = domain.as_points(x)
    return simulate_batch(model, domain, X, s, t, params, rng).outcome(0)
