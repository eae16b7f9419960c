"""
Scenario loading, validation, sweep expansion and dispatch.
"""
import itertools
import json
import logging
import time
from pathlib import Path
from typing import Callable, Optional

from ruamel.yaml import YAML
from ruamel.yaml.error import YAMLError

from diffusions.library import build_model
from killed_path.engine import SimParams
from killed_path.laws import law_from_descriptor
from utils.exceptions import ScenarioError, SimulationError
from utils.helpers import create_error_response, format_duration, simulation_setting, to_builtin
from .artifacts import ArtifactWriter
from .experiments import EXPERIMENTS, ExperimentContext
from .serializers import ScenarioSerializer

logger = logging.getLogger(__name__)

# kinds that take the list of population sizes as a whole instead of sweeping over it
LIST_VALUED_N = ('fv-scaling',)


def load_scenario(path) -> dict:
    """Read a YAML or JSON scenario file into a plain dict"""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ScenarioError(f'Cannot read scenario {path}: {exc.strerror}', code='scenario_not_found')
    try:
        if path.suffix == '.json':
            data = json.loads(text)
        else:
            data = YAML(typ='safe').load(text)
    except (ValueError, YAMLError) as exc:
        raise ScenarioError(f'Cannot parse scenario {path}: {exc}', code='scenario_unparsable')
    if not isinstance(data, dict):
        raise ScenarioError('A scenario must be a mapping.', details={'type': type(data).__name__})
    return data


def validate_scenario(raw: dict) -> dict:
    serializer = ScenarioSerializer(data=raw)
    if not serializer.is_valid():
        raise ScenarioError(details={'errors': serializer.errors})
    return dict(serializer.validated_data)


def expand_sweeps(data: dict) -> list[dict]:
    """One scalar-valued scenario per combination of the swept fields"""
    dts = data.get('dt') or [simulation_setting('DEFAULT_DT', 1e-3)]
    if data['kind'] in LIST_VALUED_N or 'N' not in data:
        Ns = [data.get('N')]
    else:
        Ns = data['N']
    variants = []
    for N, dt in itertools.product(Ns, dts):
        variant = {**data, 'dt': dt}
        if N is not None:
            variant['N'] = N
        variants.append(variant)
    return variants


def resolve_output_dir(data: dict, out=None) -> Path:
    if out:
        return Path(out)
    if data.get('output'):
        return Path(data['output'])
    return Path(simulation_setting('OUTPUT_DIR', 'runs')) / data.get('name', data['kind'])


def resolve_parts(data: dict):
    """(model, domain, initial law, SimParams) for one scalar-valued variant"""
    domain_spec = data.get('domain')
    model, domain = build_model(
        data['model']['name'],
        data['model'].get('params'),
        domain_spec['domain'] if domain_spec else None,
        data.get('declared'),
    )
    law = law_from_descriptor(domain, data.get('init') or {'type': 'uniform'})
    for name in ('x_left', 'x_right'):
        if name in data:
            law_from_descriptor(domain, {'type': 'point', 'x': data[name]})
    params = SimParams(dt=data['dt'], bridge_correction=data['bridge_correction'], seed=data['seed'])
    return model, domain, law, params


def check_scenario(raw: dict) -> dict:
    """Validate a scenario and resolve every sweep variant without simulating"""
    data = validate_scenario(raw)
    return {'kind': data['kind'], 'variants': resolve_variants(data)}


def resolve_variants(data: dict) -> list[dict]:
    variants = []
    for variant in expand_sweeps(data):
        model, domain, law, params = resolve_parts(variant)
        variants.append(resolved_document(variant, model, domain, law, params, variant.get('workers')))
    return variants


def resolved_document(data: dict, model, domain, law, params: SimParams, workers) -> dict:
    document = {key: value for key, value in data.items() if key not in ('domain', 'model', 'init')}
    document.update({
        'domain': domain.descriptor(),
        'model': model.describe(),
        'init': law.describe(),
        'params': params.as_dict(),
        'workers': workers,
    })
    return to_builtin(document)


class ScenarioRunner:
    """Validates a scenario and runs its experiment, once per sweep variant"""

    def __init__(self, raw: dict, seed: Optional[int] = None, workers: Optional[int] = None, out=None,
                 echo: Callable[[str], None] = print):
        raw = dict(raw)
        if seed is not None:
            raw['seed'] = seed
        if workers is not None:
            raw['workers'] = workers
        self.data = validate_scenario(raw)
        self.out_dir = resolve_output_dir(self.data, out)
        self.writer = ArtifactWriter(self.out_dir)
        self.echo = echo

    def _context(self, data: dict, writer: ArtifactWriter) -> ExperimentContext:
        model, domain, law, params = resolve_parts(data)
        if not domain.smooth_boundary:
            logger.warning('%s domain has a non-smooth boundary; results fall outside the stated assumptions',
                           domain.kind)
        writer.json('scenario.resolved.json', resolved_document(data, model, domain, law, params,
                                                                data.get('workers')))
        return ExperimentContext(data=data, model=model, domain=domain, law=law, params=params,
                                 workers=data.get('workers'), writer=writer, echo=self.echo)

    def _run_one(self, data: dict, writer: ArtifactWriter) -> dict:
        started = time.monotonic()
        try:
            ctx = self._context(data, writer)
            summary = EXPERIMENTS[data['kind']](ctx)
        except SimulationError as exc:
            logger.error('%s experiment failed: %s', data['kind'], exc.detail)
            writer.json('error.json', create_error_response(exc.detail, exc.code, exc.details))
            raise
        writer.json('summary.json', {'kind': data['kind'], 'name': data.get('name'),
                                     'smooth_boundary': ctx.domain.smooth_boundary, **summary})
        logger.info('%s experiment finished in %s', data['kind'], format_duration(time.monotonic() - started))
        return summary

    def run(self) -> dict:
        variants = expand_sweeps(self.data)
        if len(variants) == 1:
            return self._run_one(variants[0], self.writer)

        self.writer.json('scenario.resolved.json', {
            'kind': self.data['kind'],
            'name': self.data.get('name'),
            'sweeps': [f'sweep_{k}' for k in range(len(variants))],
            'variants': resolve_variants(self.data),
        })
        index = []
        for k, variant in enumerate(variants):
            self.echo(f'sweep {k}: N={variant.get("N")} dt={variant["dt"]:g}')
            self._run_one(variant, self.writer.child(f'sweep_{k}'))
            index.append({'sweep': k, 'directory': f'sweep_{k}', 'N': variant.get('N'), 'dt': variant['dt']})
        self.writer.csv('sweeps.csv', index, columns=['sweep', 'directory', 'N', 'dt'])
        return {'sweeps': index}


def run_scenario(path, seed: Optional[int] = None, workers: Optional[int] = None, out=None,
                 echo: Callable[[str], None] = print) -> dict:
    return ScenarioRunner(load_scenario(path), seed=seed, workers=workers, out=out, echo=echo).run()
