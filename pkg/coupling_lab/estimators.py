"""
Monte-Carlo experiments on coupled pairs: failure probability and marginal fidelity.
"""
import logging
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from killed_path import streams
from killed_path.engine import ALIVE, SimParams, time_grid
from utils.exceptions import SimulationError
from utils.helpers import binomial_stderr
from .coupling import CouplingParams, PairBatch, check_lambda0, coupled_advance, default_lambda0

logger = logging.getLogger(__name__)


@dataclass
class CouplingFailure:
    p_fail: float
    stderr: float
    replicas: int
    coupled: int
    separation: float
    t: float
    lambda0: float
    epsilon_couple: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class FailureCurve:
    times: list
    p_fail: list
    stderr: list
    replicas: int
    separation: float
    lambda0: float
    epsilon_couple: float

    def rows(self) -> list[dict]:
        return [
            {'separation': self.separation, 't': t, 'p_fail': p, 'stderr': e}
            for t, p, e in zip(self.times, self.p_fail, self.stderr)
        ]


@dataclass
class MarginalSurvival:
    p_first: float
    stderr_first: float
    p_second: float
    stderr_second: float
    replicas: int
    final_first: np.ndarray  # positions of surviving first coordinates

    def as_dict(self) -> dict:
        return {
            'p_first': self.p_first,
            'stderr_first': self.stderr_first,
            'p_second': self.p_second,
            'stderr_second': self.stderr_second,
            'replicas': self.replicas,
        }


def resolve_coupling(model, domain, params: SimParams, coupling: Optional[CouplingParams] = None) -> CouplingParams:
    """Fill in lambda0 and k0 from the model when absent and check lambda0 on sampled points"""
    rng = streams.substream(params.seed, streams.COUPLING)
    if coupling is None:
        coupling = CouplingParams(lambda0=default_lambda0(model, domain, rng=rng), k0=model.declared_k0)
    check_lambda0(model, domain, coupling, rng=rng)
    return coupling


def _pair_block(task):
    model, domain, y1, y2, s, times, params, coupling, key, count = task
    rng = streams.substream(params.seed, *key)
    epsilon = coupling.epsilon(params.dt)
    batch = PairBatch.start(np.tile(y1, (count, 1)), np.tile(y2, (count, 1)), s, epsilon,
                            rng.exponential(size=(count, 2)))
    d = batch.Y1.shape[1]
    marks = [float(t) for t in times]
    grid = time_grid(s, marks[-1], params.dt, marks)

    failed = {}
    if float(grid[0]) in marks:
        failed[float(grid[0])] = batch.failed.copy()
    for t0, t1 in zip(grid[:-1], grid[1:]):
        if batch.any_alive.any():
            xi = rng.standard_normal((count, 2 * d))
            u = rng.random((count, 2))
            coupled_advance(model, domain, batch, float(t0), float(t1 - t0), coupling, epsilon, xi, u,
                            params.bridge_correction)
        if float(t1) in marks:
            failed[float(t1)] = batch.failed.copy()
    return {
        'failed': np.stack([failed[t] for t in marks], axis=1),
        'alive': batch.status == ALIVE,
        'coupled': batch.coupled.copy(),
        'final_first': batch.Y1[batch.status[:, 0] == ALIVE].copy(),
    }


def _run_pairs(model, domain, y1, y2, s, times, replicas, params, coupling, workers, case):
    X1, _ = domain.as_points(y1)
    X2, _ = domain.as_points(y2)
    if not (domain.contains(X1)[0] and domain.contains(X2)[0]):
        raise SimulationError('Both starting points must lie inside the domain.', code='outside_domain')
    times = sorted(float(t) for t in times)
    if not times or times[0] < s:
        raise SimulationError('Observation times must lie at or after s.', code='invalid_times')
    params.check_against(model)
    tasks = [
        (model, domain, X1[0], X2[0], s, times, params, coupling, (streams.COUPLING, case, i), count)
        for i, count in enumerate(streams.block_counts(replicas))
    ]
    results = streams.map_ordered(_pair_block, tasks, workers)
    return times, {
        key: np.concatenate([result[key] for result in results])
        for key in ('failed', 'alive', 'coupled', 'final_first')
    }


def coupling_failure_curve(model, domain, y1, y2, s: float, times: Iterable[float], replicas: int, params: SimParams,
                           coupling: Optional[CouplingParams] = None, workers: Optional[int] = None,
                           case: int = 0) -> FailureCurve:
    """P(some coordinate alive at t and not yet coupled) at every t, along the same simulated pairs"""
    coupling = resolve_coupling(model, domain, params, coupling)
    times, outcome = _run_pairs(model, domain, y1, y2, s, times, replicas, params, coupling, workers, case)
    counts = outcome['failed'].sum(axis=0)
    separation = float(np.linalg.norm(np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float)))
    curve = FailureCurve(
        times=times,
        p_fail=[float(c) / replicas for c in counts],
        stderr=[binomial_stderr(int(c), replicas) for c in counts],
        replicas=int(replicas),
        separation=separation,
        lambda0=coupling.lambda0,
        epsilon_couple=coupling.epsilon(params.dt),
    )
    logger.info('Coupling failure at separation %.4g: %s', separation, np.round(curve.p_fail, 4).tolist())
    return curve


def estimate_coupling_failure(model, domain, y1, y2, s: float, t: float, replicas: int, params: SimParams,
                              coupling: Optional[CouplingParams] = None, workers: Optional[int] = None,
                              case: int = 0) -> CouplingFailure:
    coupling = resolve_coupling(model, domain, params, coupling)
    _, outcome = _run_pairs(model, domain, y1, y2, s, [t], replicas, params, coupling, workers, case)
    failed = int(outcome['failed'][:, 0].sum())
    return CouplingFailure(
        p_fail=failed / replicas,
        stderr=binomial_stderr(failed, replicas),
        replicas=int(replicas),
        coupled=int(outcome['coupled'].sum()),
        separation=float(np.linalg.norm(np.asarray(y1, dtype=float) - np.asarray(y2, dtype=float))),
        t=float(t),
        lambda0=coupling.lambda0,
        epsilon_couple=coupling.epsilon(params.dt),
    )


def marginal_survival(model, domain, y1, y2, s: float, t: float, replicas: int, params: SimParams,
                      coupling: Optional[CouplingParams] = None, workers: Optional[int] = None,
                      case: int = 0) -> MarginalSurvival:
    """Survival of each coordinate of the coupled pair, to compare with the uncoupled estimator"""
    coupling = resolve_coupling(model, domain, params, coupling)
    _, outcome = _run_pairs(model, domain, y1, y2, s, [t], replicas, params, coupling, workers, case)
    first, second = (int(n) for n in outcome['alive'].sum(axis=0))
    return MarginalSurvival(
        p_first=first / replicas,
        stderr_first=binomial_stderr(first, replicas),
        p_second=second / replicas,
        stderr_second=binomial_stderr(second, replicas),
        replicas=int(replicas),
        final_first=outcome['final_first'],
    )


def epsilon_sensitivity(model, domain, y1, y2, s: float, t: float, replicas: int, params: SimParams,
                        coupling: Optional[CouplingParams] = None, factor: float = 4.0,
                        workers: Optional[int] = None) -> dict:
    """p_fail at epsilon_couple and at epsilon_couple / factor"""
    coupling = resolve_coupling(model, domain, params, coupling)
    epsilon = coupling.epsilon(params.dt)
    results = {}
    for label, value in (('base', epsilon), ('fine', epsilon / factor)):
        variant = CouplingParams(lambda0=coupling.lambda0, epsilon_couple=value, k0=coupling.k0)
        results[label] = estimate_coupling_failure(model, domain, y1, y2, s, t, replicas, params, variant,
                                                   workers).as_dict()
    results['difference'] = abs(results['base']['p_fail'] - results['fine']['p_fail'])
    results['combined_stderr'] = float(np.hypot(results['base']['stderr'], results['fine']['stderr']))
    return results
