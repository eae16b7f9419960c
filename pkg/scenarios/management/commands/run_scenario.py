import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from scenarios.artifacts import ArtifactWriter
from scenarios.runner import ScenarioRunner, load_scenario
from utils.exceptions import ScenarioError, SimulationError
from utils.helpers import create_error_response


def fail(command, exc: SimulationError, out=None):
    """Print the machine-readable error and exit nonzero"""
    payload = create_error_response(exc.detail, exc.code, exc.details)
    command.stderr.write(json.dumps(payload, sort_keys=True))
    if out is not None:
        ArtifactWriter(out).json('error.json', payload)
    raise CommandError(exc.detail)


class Command(BaseCommand):
    help = 'Run the experiment described by a scenario file'

    def add_arguments(self, parser):
        parser.add_argument('--scenario', required=True, help='Path to a YAML or JSON scenario file')
        parser.add_argument('--seed', type=int, help='Override the seed given in the file')
        parser.add_argument('--workers', type=int, help='Cap on worker processes')
        parser.add_argument('--out', help='Output directory (overrides the file)')

    def handle(self, *args, **options):
        try:
            raw = load_scenario(options['scenario'])
            runner = ScenarioRunner(raw, seed=options['seed'], workers=options['workers'], out=options['out'],
                                    echo=self.stdout.write)
        except ScenarioError as exc:
            fail(self, exc, options['out'])

        self.stdout.write(f'Running {runner.data["kind"]} into {runner.out_dir}')
        try:
            runner.run()
        except SimulationError as exc:
            # the runner has already written error.json next to the partial outputs
            fail(self, exc)

        self.stdout.write(self.style.SUCCESS(f'Wrote {len(runner.writer.written)} files under {Path(runner.out_dir)}'))
