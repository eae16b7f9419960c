"""
Monte-Carlo estimators of the killed semigroup Q_{s,t} and of conditioned laws.

Replicas run in fixed-size blocks, each block owning the substream
(seed, purpose, ..., block index), and are reduced in block order: estimates do
not depend on the number of workers.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from measures.empirical import EmpiricalMeasure
from utils.exceptions import InsufficientSurvivorsError, SimulationError
from utils.helpers import binomial_stderr
from . import streams
from .engine import ALIVE, HARD_KILLED, SOFT_KILLED, SimParams, simulate_batch
from .laws import InitialLaw, PointMass

logger = logging.getLogger(__name__)


@dataclass
class SurvivalEstimate:
    p_hat: float
    stderr: float
    replicas: int
    alive: int
    hard_kills: int
    soft_kills: int
    dt: float
    seed: int
    bridge_correction: bool

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SurvivalProfile:
    points: np.ndarray
    p_hat: np.ndarray
    stderr: np.ndarray
    replicas_per_point: int


def as_law(domain, init) -> InitialLaw:
    if isinstance(init, InitialLaw):
        return init
    return PointMass(domain, init)


def _replica_block(task):
    model, domain, law, s, t, params, key, count, checkpoints = task
    rng = streams.substream(params.seed, *key)
    X0 = law.sample(count, rng)
    return simulate_batch(model, domain, X0, s, t, params, rng, checkpoints)


def _tasks(model, domain, law, s, t, params, counts, prefix, checkpoints=(), first_block=0):
    return [
        (model, domain, law, s, t, params, (*prefix, first_block + i), count, tuple(checkpoints))
        for i, count in enumerate(counts)
    ]


def run_replicas(model, domain, init, s: float, t: float, replicas: int, params: SimParams,
                 workers: Optional[int] = None, checkpoints=(), prefix=(streams.REPLICAS,)) -> list:
    """Simulate ``replicas`` paths; one BatchResult per block, in block order"""
    if replicas < 1:
        raise SimulationError('At least one replica is required.', code='invalid_replicas')
    law = as_law(domain, init)
    tasks = _tasks(model, domain, law, s, t, params, streams.block_counts(replicas), prefix, checkpoints)
    return streams.map_ordered(_replica_block, tasks, workers)


def estimate_survival(model, domain, init, s: float, t: float, replicas: int, params: SimParams,
                      workers: Optional[int] = None) -> SurvivalEstimate:
    """Proportion of paths alive at t: the Monte-Carlo value of mu Q_{s,t} 1_D"""
    params.check_against(model)
    blocks = run_replicas(model, domain, init, s, t, replicas, params, workers)
    status = np.concatenate([block.status for block in blocks])
    alive = int(np.sum(status == ALIVE))
    estimate = SurvivalEstimate(
        p_hat=alive / replicas,
        stderr=binomial_stderr(alive, replicas),
        replicas=int(replicas),
        alive=alive,
        hard_kills=int(np.sum(status == HARD_KILLED)),
        soft_kills=int(np.sum(status == SOFT_KILLED)),
        dt=params.dt,
        seed=params.seed,
        bridge_correction=params.bridge_correction,
    )
    logger.info('Survival over [%g, %g]: %.5f +/- %.5f (%d replicas)', s, t, estimate.p_hat, estimate.stderr, replicas)
    return estimate


def _rejection_sample(model, domain, init, s, t, horizon, target, max_replicas, params, workers, prefix):
    if target < 1:
        raise SimulationError('target_survivors must be at least 1.', code='invalid_target')
    if horizon < t:
        raise SimulationError('The conditioning horizon must not precede t.', code='invalid_times')
    params.check_against(model)
    law = as_law(domain, init)
    counts = streams.block_counts(max_replicas)
    workers = streams.resolve_workers(workers)
    checkpoints = (t,) if horizon > t else ()

    found, used, clouds, index = 0, 0, [], 0
    while index < len(counts) and found < target:
        batch = range(index, min(index + workers, len(counts)))
        tasks = _tasks(model, domain, law, s, horizon, params, [counts[i] for i in batch], prefix,
                       checkpoints, first_block=index)
        for i, result in zip(batch, streams.map_ordered(_replica_block, tasks, workers)):
            if found >= target:
                break
            survived = result.alive
            points = result.snapshot(t).positions[survived] if checkpoints else result.positions[survived]
            clouds.append(points)
            found += points.shape[0]
            used += counts[i]
        index = batch.stop

    points = np.concatenate(clouds) if clouds else np.zeros((0, domain.dim))
    acceptance = found / used if used else 0.0
    if found < target:
        partial = EmpiricalMeasure(points, time=t, acceptance_rate=acceptance) if found else None
        logger.warning('Only %d of %d survivors after %d replicas', found, target, used)
        raise InsufficientSurvivorsError(achieved=found, target=target, partial=partial, replicas=used)
    logger.info('Collected %d survivors at t=%g (acceptance %.4f)', target, t, acceptance)
    return EmpiricalMeasure(points[:target], time=t, acceptance_rate=acceptance)


def conditioned_sample(model, domain, init, s: float, t: float, target_survivors: int, max_replicas: int,
                       params: SimParams, workers: Optional[int] = None,
                       prefix=(streams.REPLICAS,)) -> EmpiricalMeasure:
    """Survivor cloud at t by rejection: the estimate of mu Q_{s,t} / mu Q_{s,t} 1_D"""
    return _rejection_sample(model, domain, init, s, t, t, target_survivors, max_replicas, params, workers, prefix)


def horizon_conditioned_sample(model, domain, init, s: float, t: float, horizon: float, target_survivors: int,
                               max_replicas: int, params: SimParams, workers: Optional[int] = None,
                               prefix=(streams.REPLICAS,)) -> EmpiricalMeasure:
    """Positions at t of paths that survive until horizon >= t"""
    return _rejection_sample(
        model, domain, init, s, t, horizon, target_survivors, max_replicas, params, workers, prefix,
    )


def survival_profile(model, domain, points, s: float, t: float, replicas_per_point: int, params: SimParams,
                     workers: Optional[int] = None) -> SurvivalProfile:
    """Q_{s,t} 1_D estimated at each of the given starting points"""
    X, _ = domain.as_points(points)
    counts = streams.block_counts(replicas_per_point)
    tasks = []
    for i, x in enumerate(X):
        tasks += _tasks(model, domain, PointMass(domain, x), s, t, params, counts, (streams.PROFILE, i))
    results = streams.map_ordered(_replica_block, tasks, workers)

    alive = np.zeros(X.shape[0], dtype=np.int64)
    for j, result in enumerate(results):
        alive[j // len(counts)] += int(np.sum(result.alive))
    p_hat = alive / replicas_per_point
    stderr = np.array([binomial_stderr(int(a), replicas_per_point) for a in alive])
    return SurvivalProfile(points=X, p_hat=p_hat, stderr=stderr, replicas_per_point=int(replicas_per_point))


def flat_maximum_diagnostic(values, points) -> dict:
    """Largest radius r0 around the maximizer inside which the profile stays above half its maximum"""
    values = np.asarray(values, dtype=float)
    points = np.asarray(points, dtype=float).reshape(values.shape[0], -1)
    best = int(np.argmax(values))
    peak = float(values[best])
    distance = np.linalg.norm(points - points[best], axis=1)
    low = values < 0.5 * peak
    r0 = float(distance[low].min()) if low.any() else float(distance.max())
    return {
        'argmax': points[best].tolist(),
        'max': peak,
        'r0': r0,
        'half_max_fraction': float(np.mean(~low)),
    }
