"""
Fleming-Viot particle approximation of the conditioned law.

N particles follow independent copies of the killed dynamics. A killed
particle is reborn at once at the position of another particle, chosen
uniformly, so the population stays at N and the empirical measure tracks
mu Q_{s,t} / mu Q_{s,t} 1_D.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import stats

from killed_path import streams
from killed_path.engine import ALIVE, HARD_KILLED, SimParams, advance
from killed_path.laws import InitialLaw
from measures.empirical import EmpiricalMeasure, boundary_mass
from utils.exceptions import FlemingViotError, SimulationError
from utils.helpers import simulation_setting

logger = logging.getLogger(__name__)

# attempt index reserved for the initial draw
INIT_STEP = 0


@dataclass(frozen=True)
class RebirthEvent:
    time: float
    killed_index: int
    donor_index: int
    kind: str  # 'hard' | 'soft'

    def as_row(self) -> dict:
        return {'time': self.time, 'killed': self.killed_index, 'donor': self.donor_index, 'kind': self.kind}


@dataclass
class ParticleSystem:
    model: object
    domain: object
    positions: np.ndarray
    clock: float
    start: float
    params: SimParams
    soft_clocks: np.ndarray
    thresholds: np.ndarray
    stream_key: tuple = ()
    step_counter: int = 0
    retries: int = 0
    rebirth_log: list = field(default_factory=list)
    initial_boundary_mass: Optional[float] = None

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def empirical(self) -> EmpiricalMeasure:
        return EmpiricalMeasure(self.positions.copy(), time=self.clock)

    def generator(self, step: int, attempt: int) -> np.random.Generator:
        return streams.substream(self.params.seed, streams.FLEMING_VIOT, *self.stream_key, step, attempt)


@dataclass
class StepReport:
    dt_used: float
    attempts: int
    events: list


@dataclass
class FVRun:
    snapshots: list  # (time, EmpiricalMeasure)
    rebirth_log: list
    summary: dict

    def measure_at(self, time: float) -> EmpiricalMeasure:
        for when, measure in self.snapshots:
            if when == time:
                return measure
        raise KeyError(time)


def fv_init(model, domain, init, N: Optional[int], s: float, params: SimParams,
            stream_key: Iterable[int] = ()) -> ParticleSystem:
    """N particles at time s, drawn from an InitialLaw or given explicitly as an (N, d) array"""
    stream_key = tuple(int(k) for k in stream_key)
    init_rng = streams.substream(params.seed, streams.FLEMING_VIOT, *stream_key, INIT_STEP, 0)
    if isinstance(init, InitialLaw):
        if N is None:
            raise SimulationError('N is required when particles are drawn from a law.', code='invalid_population')
        positions = init.sample(int(N), init_rng)
    else:
        positions, _ = domain.as_points(init)
        positions = positions.copy()
        if N is not None and positions.shape[0] != N:
            raise SimulationError(f'Expected {N} initial points, got {positions.shape[0]}.', code='invalid_population')

    if positions.shape[0] < 2:
        raise SimulationError('A Fleming-Viot system needs at least two particles.', code='invalid_population')
    outside = ~domain.contains(positions)
    if outside.any():
        raise SimulationError(
            'Every initial particle must lie inside the domain.',
            code='outside_domain',
            details={'first_outside': positions[np.flatnonzero(outside)[0]].tolist()},
        )

    params.check_against(model)
    system = ParticleSystem(
        model=model,
        domain=domain,
        positions=positions,
        clock=float(s),
        start=float(s),
        params=params,
        soft_clocks=np.zeros(positions.shape[0]),
        thresholds=init_rng.exponential(size=positions.shape[0]),
        stream_key=stream_key,
    )
    system.initial_boundary_mass = boundary_mass(system.empirical(), domain, domain.collar_width())
    logger.debug('Initialized %d particles at s=%g (boundary mass %.4f)', system.N, s,
                 system.initial_boundary_mass)
    return system


def fv_step(system: ParticleSystem, dt: float, rng: Optional[np.random.Generator] = None) -> StepReport:
    """Advance every particle by dt and resolve kills by rebirth.

    Killed particles are handled in ascending index order and each takes the
    position of a donor drawn uniformly among the particles that survived the
    step. A step that kills all N particles is retried with dt/2.
    """
    if not dt > 0:
        raise SimulationError('Time step dt must be positive.', code='invalid_dt')
    min_dt = simulation_setting('FV_MIN_DT', 1e-12)
    system.step_counter += 1
    N, d = system.positions.shape
    t = system.clock

    attempt, h = 0, float(dt)
    while True:
        if h < min_dt:
            raise FlemingViotError(
                f'Every particle was killed at each step size down to {h:g}.',
                details={'time': t, 'dt': dt, 'attempts': attempt, 'min_dt': min_dt,
                         'positions': system.positions.tolist()[:10]},
            )
        gen = rng if rng is not None else system.generator(system.step_counter, attempt)
        xi = gen.standard_normal((N, d))
        u = gen.random(N)
        proposal, kind, fraction, new_clock = advance(
            system.model, system.domain, t, system.positions, h, system.soft_clocks, system.thresholds,
            xi, u, system.params.bridge_correction,
        )
        killed = np.flatnonzero(kind != ALIVE)
        if killed.size < N:
            break
        logger.warning('All %d particles killed at t=%g with dt=%g; retrying with dt/2', N, t, h)
        attempt += 1
        system.retries += 1
        h /= 2.0

    survivors = np.flatnonzero(kind == ALIVE)
    positions = proposal.copy()
    donors = survivors[gen.integers(0, survivors.size, size=killed.size)]
    positions[killed] = proposal[donors]

    soft_clocks = new_clock
    soft_clocks[killed] = 0.0
    system.thresholds[killed] = gen.exponential(size=killed.size)
    system.soft_clocks = soft_clocks
    system.positions = positions
    system.clock = t + h

    events = []
    if killed.size:
        times = t + fraction[killed] * h
        for j in np.lexsort((killed, times)):
            events.append(RebirthEvent(
                time=float(times[j]),
                killed_index=int(killed[j]),
                donor_index=int(donors[j]),
                kind='hard' if kind[killed[j]] == HARD_KILLED else 'soft',
            ))
        _append_events(system.rebirth_log, events)
    return StepReport(dt_used=h, attempts=attempt + 1, events=events)


def _append_events(log: list, events: list):
    """Append keeping log times strictly increasing.

    Simultaneous rebirths are nudged apart by one ulp; this only orders the log and does not move particles.
    """
    last = log[-1].time if log else -np.inf
    for event in events:
        if event.time <= last:
            event = RebirthEvent(float(np.nextafter(last, np.inf)), event.killed_index, event.donor_index, event.kind)
        log.append(event)
        last = event.time


def fv_run(system: ParticleSystem, t_end: float, checkpoints: Iterable[float] = (), dt: Optional[float] = None,
           collar: Optional[float] = None) -> FVRun:
    """Run to t_end, snapshotting the empirical measure exactly at each checkpoint"""
    dt = system.params.dt if dt is None else float(dt)
    marks = sorted({float(c) for c in checkpoints}) or [float(t_end)]
    if t_end < system.clock or marks[0] < system.clock or marks[-1] > t_end:
        raise SimulationError(
            'Checkpoints must lie between the current time and t_end.',
            code='invalid_checkpoints',
            details={'clock': system.clock, 't_end': t_end, 'checkpoints': marks},
        )
    collar = system.domain.collar_width(collar)
    targets = marks + ([float(t_end)] if marks[-1] < t_end else [])
    log_start = len(system.rebirth_log)
    steps_before = system.step_counter

    snapshots, masses = [], []
    for target in targets:
        while target - system.clock > 1e-12 * max(1.0, abs(target)):
            remaining = target - system.clock
            report = fv_step(system, min(dt, remaining))
            if report.dt_used >= remaining:
                system.clock = target
        system.clock = target
        if target in marks:
            measure = system.empirical()
            mass = boundary_mass(measure, system.domain, collar)
            snapshots.append((target, measure))
            masses.append(mass)
            logger.info('FV checkpoint t=%g: %d rebirths so far, boundary mass %.4f',
                        target, len(system.rebirth_log) - log_start, mass)

    log = system.rebirth_log[log_start:]
    summary = {
        'N': system.N,
        's': system.start,
        't_end': float(t_end),
        'dt': dt,
        'steps': system.step_counter - steps_before,
        'retries': system.retries,
        'rebirths': len(log),
        'hard_kills': sum(event.kind == 'hard' for event in log),
        'soft_kills': sum(event.kind == 'soft' for event in log),
        'collar_width': collar,
        'initial_boundary_mass': system.initial_boundary_mass,
        'boundary_mass': [{'time': when, 'mass': mass} for (when, _), mass in zip(snapshots, masses)],
        'seed': system.params.seed,
        'bridge_correction': system.params.bridge_correction,
    }
    return FVRun(snapshots=snapshots, rebirth_log=log, summary=summary)


def fv_error(measure: EmpiricalMeasure, f: Callable, oracle: float) -> float:
    """|mu^N(f) - oracle|"""
    return abs(measure.expectation(f) - float(oracle))


@dataclass
class ErrorScaling:
    Ns: list
    mean_error: list
    stderr: list
    runs: int
    exponent: Optional[float] = None

    def ratio(self, small: int, large: int) -> float:
        return self.mean_error[self.Ns.index(small)] / self.mean_error[self.Ns.index(large)]

    def as_dict(self) -> dict:
        return {
            'Ns': self.Ns,
            'mean_error': self.mean_error,
            'stderr': self.stderr,
            'runs': self.runs,
            'exponent': self.exponent,
        }


def _scaling_run(task):
    model, domain, init, N, s, t, params, key, f, oracle = task
    system = fv_init(model, domain, init, N, s, params, stream_key=key)
    run = fv_run(system, t, [t])
    return fv_error(run.snapshots[-1][1], f, oracle)


def fv_error_scaling(model, domain, init, Ns: Iterable[int], runs: int, s: float, t: float, f: Callable,
                     oracle: float, params: SimParams, workers: Optional[int] = None) -> ErrorScaling:
    """Mean |mu^N_t(f) - oracle| over independent runs for each N; f must be picklable when workers > 1"""
    Ns = [int(N) for N in Ns]
    if runs < 1:
        raise SimulationError('At least one run per N is required.', code='invalid_runs')
    tasks = [
        (model, domain, init, N, s, t, params, (N, r), f, oracle)
        for N in Ns for r in range(runs)
    ]
    errors = np.asarray(streams.map_ordered(_scaling_run, tasks, workers)).reshape(len(Ns), runs)
    mean = errors.mean(axis=1)
    stderr = errors.std(axis=1, ddof=1) / np.sqrt(runs) if runs > 1 else np.zeros(len(Ns))

    exponent = None
    if len(Ns) > 1 and np.all(mean > 0):
        exponent = float(-stats.linregress(np.log(Ns), np.log(mean)).slope)
    logger.info('FV error scaling over N=%s: %s', Ns, np.round(mean, 5).tolist())
    return ErrorScaling(Ns=Ns, mean_error=mean.tolist(), stderr=stderr.tolist(), runs=int(runs), exponent=exponent)
