"""
One handler per experiment kind. Each handler receives an ExperimentContext,
writes its tables and summary through the context's writer and returns the
summary dict.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from coupling_lab.coupling import CouplingParams, check_joint_covariance, default_lambda0
from coupling_lab.estimators import coupling_failure_curve
from diffusions.library import BrownianModel, SoftKillBrownianModel
from diffusions.validators import ValidationResult, validate_model
from fleming_viot.diagnostics import fv_jump_time_diagnostic, rate_stability
from fleming_viot.particles import fv_error_scaling, fv_init, fv_run
from geometry.domains import Interval
from killed_path import streams
from killed_path.engine import SimParams
from killed_path.estimators import conditioned_sample, estimate_survival, horizon_conditioned_sample
from killed_path.laws import PointMass, UniformLaw
from measures.empirical import Binning, EmpiricalMeasure, boundary_mass, default_bins, histogram, tv_distance
from measures.fitting import default_noise_floor, fit_exponential
from measures.references import binned_conditioned, binned_qsd, mixing_tv, survival_probability
from utils.exceptions import CouplingError, FitError, InsufficientSurvivorsError, SimulationError
from utils.helpers import safe_divide, simulation_setting
from .artifacts import ArtifactWriter

logger = logging.getLogger(__name__)

# rejection budget per requested survivor when max_replicas is not given
DEFAULT_REPLICAS_PER_SURVIVOR = 200

# fv-vs-mc: the TV curve counts as flat when max/min <= FV_VS_MC_MAX_RATIO + allowance
FV_VS_MC_NOISE_ALLOWANCE = 0.05
FV_VS_MC_MAX_RATIO = 1.5


@dataclass
class ExperimentContext:
    data: dict
    model: object
    domain: object
    law: object
    params: SimParams
    workers: Optional[int]
    writer: ArtifactWriter
    echo: Callable[[str], None]

    @property
    def s(self) -> float:
        return self.data['s']

    def max_replicas(self, survivors: int) -> int:
        return self.data.get('max_replicas', DEFAULT_REPLICAS_PER_SURVIVOR * survivors)

    def binning(self, cloud_size: int) -> Binning:
        bins = self.data.get('bins') or default_bins(cloud_size, self.domain.dim)
        return Binning.for_domain(self.domain, bins)

    def collar(self) -> float:
        return self.domain.collar_width(self.data.get('alpha'))


class HalfSpaceIndicator:
    """1 on {x[axis] <= threshold}"""

    def __init__(self, axis: int, threshold: float):
        self.axis = axis
        self.threshold = threshold

    def __call__(self, points):
        return (points[:, self.axis] <= self.threshold).astype(float)


def dirichlet_reference(ctx: ExperimentContext):
    """(rate, x0) when the closed-form references on (0, 1) apply, else None.

    x0 is the starting point of a point law, None for the uniform law.
    """
    domain, model, law = ctx.domain, ctx.model, ctx.law
    if not isinstance(domain, Interval) or (domain.a, domain.b) != (0.0, 1.0):
        return None
    if type(model) is BrownianModel:
        rate = 0.0
    elif isinstance(model, SoftKillBrownianModel) and model.variant == 'constant':
        rate = model.rate
    else:
        return None
    if isinstance(law, PointMass):
        return rate, float(law.x[0])
    if isinstance(law, UniformLaw):
        return rate, None
    return None


def cloud_rows(measure: EmpiricalMeasure, time: Optional[float] = None) -> list[dict]:
    rows = []
    for index, point in enumerate(measure.points):
        row = {} if time is None else {'time': time}
        row['index'] = index
        row.update({f'x{axis}': float(value) for axis, value in enumerate(point)})
        rows.append(row)
    return rows


def histogram_rows(hist, time: Optional[float] = None) -> list[dict]:
    rows = hist.rows()
    if time is not None:
        rows = [{'time': time, **row} for row in rows]
    return rows


def _pool(snapshots, start: float) -> Optional[EmpiricalMeasure]:
    clouds = [measure.points for time, measure in snapshots if time >= start]
    return EmpiricalMeasure(np.concatenate(clouds)) if clouds else None


def run_fv(ctx: ExperimentContext) -> dict:
    data, domain = ctx.data, ctx.domain
    N, t_end = data['N'], data['t_end']
    system = fv_init(ctx.model, domain, ctx.law, N, ctx.s, ctx.params)
    run = fv_run(system, t_end, data.get('checkpoints') or [t_end], collar=data.get('alpha'))
    binning = ctx.binning(N)
    reference = dirichlet_reference(ctx)
    qsd = binned_qsd(binning) if reference else None

    tv_rows, clouds, hists = [], [], []
    for (time, measure), mass in zip(run.snapshots, run.summary['boundary_mass']):
        hist = histogram(measure, binning)
        row = {'time': time, 'boundary_mass': mass['mass']}
        if reference and time > ctx.s:
            row['tv_reference'] = tv_distance(hist, binned_conditioned(reference[1], time - ctx.s, binning))
            row['tv_qsd'] = tv_distance(hist, qsd)
        tv_rows.append(row)
        clouds += cloud_rows(measure, time)
        hists += histogram_rows(hist, time)
        extra = f", tv_qsd={row['tv_qsd']:.4f}" if 'tv_qsd' in row else ''
        ctx.echo(f't={time:g} N={N} rebirths={sum(e.time <= time for e in run.rebirth_log)} '
                 f'boundary_mass={mass["mass"]:.4f}{extra}')

    ctx.writer.csv('clouds.csv', clouds)
    ctx.writer.csv('histograms.csv', hists)
    ctx.writer.csv('checkpoints.csv', tv_rows)
    ctx.writer.csv('rebirths.csv', [event.as_row() for event in run.rebirth_log],
                   columns=['time', 'killed', 'donor', 'kind'])

    summary = {
        'run': run.summary,
        'binning': binning.describe(),
        'checkpoints': tv_rows,
        'jumps': fv_jump_time_diagnostic(run.rebirth_log, t_end, ctx.s),
    }
    if 'pool_from' in data:
        pooled = _pool(run.snapshots, data['pool_from'])
        if pooled is not None:
            hist = histogram(pooled, binning)
            ctx.writer.csv('pooled_histogram.csv', histogram_rows(hist))
            summary['pooled'] = {'from': data['pool_from'], 'points': pooled.count}
            if reference:
                summary['pooled']['tv_qsd'] = tv_distance(hist, qsd)
                ctx.echo(f'pooled from t={data["pool_from"]:g}: tv_qsd={summary["pooled"]["tv_qsd"]:.4f}')
    return summary


def _sample(ctx, t, survivors, horizon=None, prefix=(streams.REPLICAS,), law=None, s=None):
    law = law or ctx.law
    s = ctx.s if s is None else s
    max_replicas = ctx.max_replicas(survivors)
    try:
        if horizon is None:
            return conditioned_sample(ctx.model, ctx.domain, law, s, t, survivors, max_replicas, ctx.params,
                                      ctx.workers, prefix)
        return horizon_conditioned_sample(ctx.model, ctx.domain, law, s, t, horizon, survivors, max_replicas,
                                          ctx.params, ctx.workers, prefix)
    except InsufficientSurvivorsError as exc:
        if exc.partial is not None:
            ctx.writer.csv('partial_cloud.csv', cloud_rows(exc.partial))
        raise


def _cloud_summary(ctx, measure, binning) -> dict:
    hist = histogram(measure, binning)
    ctx.writer.csv('cloud.csv', cloud_rows(measure))
    ctx.writer.csv('histogram.csv', histogram_rows(hist))
    collar = ctx.collar()
    return {
        'count': measure.count,
        'time': measure.time,
        'acceptance_rate': measure.acceptance_rate,
        'mean': measure.mean(),
        'collar_width': collar,
        'boundary_mass': boundary_mass(measure, ctx.domain, collar),
        'binning': binning.describe(),
    }


def run_conditioned(ctx: ExperimentContext) -> dict:
    t, survivors = ctx.data['t_end'], ctx.data['survivors']
    measure = _sample(ctx, t, survivors)
    binning = ctx.binning(survivors)
    summary = _cloud_summary(ctx, measure, binning)
    reference = dirichlet_reference(ctx)
    if reference and t > ctx.s:
        summary['tv_reference'] = tv_distance(histogram(measure, binning),
                                              binned_conditioned(reference[1], t - ctx.s, binning))
        summary['tv_qsd'] = tv_distance(histogram(measure, binning), binned_qsd(binning))
    ctx.echo(f't={t:g} survivors={measure.count} acceptance={measure.acceptance_rate:.4f} '
             f'boundary_mass={summary["boundary_mass"]:.4f}')
    return summary


def run_horizon(ctx: ExperimentContext) -> dict:
    t, horizon, survivors = ctx.data['t_end'], ctx.data['horizon'], ctx.data['survivors']
    measure = _sample(ctx, t, survivors, horizon=horizon)
    summary = _cloud_summary(ctx, measure, ctx.binning(survivors))
    summary['horizon'] = horizon
    ctx.echo(f't={t:g} horizon={horizon:g} survivors={measure.count} acceptance={measure.acceptance_rate:.4f}')
    return summary


def run_mixing(ctx: ExperimentContext) -> dict:
    data, domain = ctx.data, ctx.domain
    survivors = data['survivors']
    left, right = PointMass(domain, data['x_left']), PointMass(domain, data['x_right'])
    binning = ctx.binning(survivors)
    floor = data.get('noise_floor', default_noise_floor(binning.total_bins, survivors))
    exact = dirichlet_reference(ctx) is not None

    rows = []
    for i, t in enumerate(data['times']):
        if t <= ctx.s:
            raise SimulationError('Mixing times must be after s.', code='invalid_times')
        hists = [
            histogram(_sample(ctx, t, survivors, law=law, prefix=(streams.REPLICAS, 2 * i + side)), binning)
            for side, law in enumerate((left, right))
        ]
        row = {'t': t, 'tv': tv_distance(*hists)}
        if exact:
            row['tv_reference'] = mixing_tv(float(left.x[0]), float(right.x[0]), t - ctx.s, binning)
        rows.append(row)
        ctx.echo(f't={t:g} tv={row["tv"]:.4f}')
    ctx.writer.csv('mixing_curve.csv', rows)

    summary = {'noise_floor': floor, 'binning': binning.describe(), 'curve': rows}
    times = np.array([row['t'] for row in rows]) - ctx.s
    try:
        fit = fit_exponential(times, [row['tv'] for row in rows], floor).as_dict()
    except FitError as exc:
        logger.warning('Rate fit failed: %s', exc.detail)
        fit = {'error': exc.code, 'message': exc.detail, 'details': exc.details}
    ctx.writer.json('rate_fit.json', fit)
    summary['fit'] = fit
    if 'gamma' in fit:
        ctx.echo(f'gamma={fit["gamma"]:.3f} r2={fit["r_squared"]:.3f} over {fit["points_used"]} points')
    return summary


def run_fv_vs_mc(ctx: ExperimentContext) -> dict:
    data, domain = ctx.data, ctx.domain
    N, checkpoints = data['N'], data['checkpoints']
    survivors = data.get('reference_survivors', data['survivors'])
    window = data.get('reference_window')
    t_end = data.get('t_end', checkpoints[-1])
    system = fv_init(ctx.model, domain, ctx.law, N, ctx.s, ctx.params)
    run = fv_run(system, t_end, checkpoints, collar=data.get('alpha'))
    binning = ctx.binning(min(N, survivors))

    rows = []
    for i, (time, measure) in enumerate(run.snapshots):
        if window is not None and time - window > ctx.s:
            start, law = time - window, UniformLaw(domain)
        else:
            start, law = ctx.s, ctx.law
        reference = _sample(ctx, time, survivors, law=law, s=start, prefix=(streams.REFERENCE, i))
        tv = tv_distance(histogram(measure, binning), histogram(reference, binning))
        rows.append({
            'time': time,
            'tv': tv,
            'reference_start': start,
            'reference_acceptance': reference.acceptance_rate,
            'fv_boundary_mass': run.summary['boundary_mass'][i]['mass'],
        })
        ctx.echo(f't={time:g} tv={tv:.4f} reference_start={start:g}')
    ctx.writer.csv('fv_vs_mc.csv', rows)
    ctx.writer.csv('rebirths.csv', [event.as_row() for event in run.rebirth_log],
                   columns=['time', 'killed', 'donor', 'kind'])

    tvs = np.array([row['tv'] for row in rows])
    allowance = data.get('noise_allowance', FV_VS_MC_NOISE_ALLOWANCE)
    ratio = float(tvs.max() / tvs.min()) if tvs.min() > 0 else None
    return {
        'run': run.summary,
        'binning': binning.describe(),
        'curve': rows,
        'tv_max': float(tvs.max()),
        'tv_min': float(tvs.min()),
        'tv_ratio': ratio,
        'noise_allowance': allowance,
        'flat': ratio is not None and ratio <= FV_VS_MC_MAX_RATIO + allowance,
        'rate_stability': rate_stability(fv_jump_time_diagnostic(run.rebirth_log, t_end, ctx.s), ctx.s, t_end),
    }


def _coupling_params(ctx) -> CouplingParams:
    options = ctx.data.get('coupling', {})
    lambda0 = options.get('lambda0')
    if lambda0 is None:
        lambda0 = default_lambda0(ctx.model, ctx.domain, rng=streams.substream(ctx.params.seed, streams.COUPLING))
    return CouplingParams(lambda0=lambda0, epsilon_couple=options.get('epsilon_couple'), k0=ctx.model.declared_k0)


def run_coupling(ctx: ExperimentContext) -> dict:
    data, domain = ctx.data, ctx.domain
    options = data.get('coupling', {})
    lower, upper = domain.bounding_box()
    center = np.asarray(options.get('center', (lower + upper) / 2), dtype=float)
    direction = np.asarray(options.get('direction', np.eye(domain.dim)[0]), dtype=float)
    direction = direction / np.linalg.norm(direction)
    coupling = _coupling_params(ctx)

    rows, curves = [], []
    for case, separation in enumerate(data['separations']):
        y1 = center + separation / 2 * direction
        y2 = center - separation / 2 * direction
        curve = coupling_failure_curve(ctx.model, domain, y1, y2, ctx.s, data['times'], data['replicas'],
                                       ctx.params, coupling, ctx.workers, case=case)
        rows += curve.rows()
        curves.append(curve)
        ctx.echo(f'separation={separation:g} p_fail={[round(p, 5) for p in curve.p_fail]}')
    ctx.writer.csv('coupling_failure.csv', rows, columns=['separation', 't', 'p_fail', 'stderr'])

    scaling = []
    for j, t in enumerate(data['times']):
        ratios = [c.p_fail[j] / c.separation for c in curves if c.separation > 0]
        spread = max(ratios) / min(ratios) if ratios and min(ratios) > 0 else None
        scaling.append({'t': t, 'ratios': ratios, 'spread': spread})
    return {
        'coupling': coupling.as_dict(ctx.params.dt),
        'center': center,
        'direction': direction,
        'curves': rows,
        'monotone_in_t': all(all(a >= b for a, b in zip(c.p_fail, c.p_fail[1:])) for c in curves),
        'scaling': scaling,
    }


def run_check_model(ctx: ExperimentContext) -> dict:
    samples = ctx.data.get('samples')
    results = validate_model(ctx.model, ctx.domain, samples, seed=ctx.params.seed)
    tolerance = simulation_setting('PSD_TOL', 1e-10)
    try:
        coupling = _coupling_params(ctx)
        smallest = check_joint_covariance(ctx.model, ctx.domain, coupling, samples,
                                          streams.substream(ctx.params.seed, streams.COUPLING, 1))
        results.append(ValidationResult(
            check='joint_covariance',
            value=smallest,
            declared=coupling.lambda0,
            passed=smallest >= -tolerance,
            severity='error',
            message=f'min eigenvalue {smallest:.3g} of the coupled diffusion matrix (lambda0={coupling.lambda0:.6g})',
        ))
    except CouplingError as exc:
        results.append(ValidationResult('joint_covariance', float('nan'), None, False, 'error', exc.detail))

    rows = [result.as_dict() for result in results]
    for result in results:
        status = 'ok' if result.passed else ('FAIL' if result.severity == 'error' else 'warn')
        ctx.echo(f'{result.check}: {status} ({result.message})')
    ctx.writer.csv('validation.csv', rows)
    summary = {'model': ctx.model.describe(), 'results': rows}
    failed = [result.check for result in results if not result.passed and result.severity == 'error']
    if failed:
        ctx.writer.json('validation.json', summary)
        raise SimulationError(f'Model {ctx.model.name} failed validation: {", ".join(failed)}.',
                              code='validation_failed', details={'failed': failed})
    return summary


def run_survival(ctx: ExperimentContext) -> dict:
    t, replicas = ctx.data['t_end'], ctx.data['replicas']
    reference = dirichlet_reference(ctx)
    oracle = None
    if reference and reference[1] is not None:
        oracle = float(survival_probability(reference[1], t - ctx.s, rate=reference[0]))

    rows = []
    for method, bridge in (('bridge', True), ('naive', False)):
        params = replace(ctx.params, bridge_correction=bridge)
        estimate = estimate_survival(ctx.model, ctx.domain, ctx.law, ctx.s, t, replicas, params, ctx.workers)
        rows.append({'method': method, **estimate.as_dict(), 'oracle': oracle})
        ctx.echo(f'{method}: p={estimate.p_hat:.5f} +/- {estimate.stderr:.5f}'
                 + (f' (oracle {oracle:.5f})' if oracle is not None else ''))
    ctx.writer.csv('survival.csv', rows)
    summary = {'estimates': rows, 'oracle': oracle}
    if oracle is not None:
        summary['bridge_closer'] = abs(rows[0]['p_hat'] - oracle) < abs(rows[1]['p_hat'] - oracle)
    return summary


def run_fv_scaling(ctx: ExperimentContext) -> dict:
    data, domain = ctx.data, ctx.domain
    t = data['t_end']
    lower, upper = domain.bounding_box()
    f = HalfSpaceIndicator(0, float((lower[0] + upper[0]) / 2))

    reference = dirichlet_reference(ctx)
    if reference and t > ctx.s:
        halves = Binning.regular(0.0, 1.0, 2)
        oracle = float(binned_conditioned(reference[1], t - ctx.s, halves).probabilities[0])
        oracle_source = 'closed_form'
    else:
        measure = _sample(ctx, t, data.get('reference_survivors', 10000), prefix=(streams.REFERENCE, 0))
        oracle = measure.expectation(f)
        oracle_source = 'monte_carlo'

    scaling = fv_error_scaling(ctx.model, domain, ctx.law, data['N'], data['runs'], ctx.s, t, f, oracle,
                               ctx.params, ctx.workers)
    rows = [
        {'N': N, 'mean_error': mean, 'stderr': err}
        for N, mean, err in zip(scaling.Ns, scaling.mean_error, scaling.stderr)
    ]
    for row in rows:
        ctx.echo(f'N={row["N"]} mean_error={row["mean_error"]:.5f} +/- {row["stderr"]:.5f}')
    ctx.writer.csv('fv_scaling.csv', rows)
    return {
        **scaling.as_dict(),
        'oracle': oracle,
        'oracle_source': oracle_source,
        'ratio': safe_divide(scaling.mean_error[0], scaling.mean_error[-1], None),
    }


EXPERIMENTS = {
    'fv-run': run_fv,
    'conditioned-mc': run_conditioned,
    'mixing-curve': run_mixing,
    'fv-vs-mc': run_fv_vs_mc,
    'coupling-sweep': run_coupling,
    'check-model': run_check_model,
    'survival': run_survival,
    'fv-scaling': run_fv_scaling,
    'horizon-mc': run_horizon,
}
