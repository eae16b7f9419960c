from django.core.management.base import BaseCommand

from scenarios.runner import ScenarioRunner
from utils.exceptions import SimulationError
from .run_scenario import fail


class Command(BaseCommand):
    help = 'Run the validator suite on a library model'

    def add_arguments(self, parser):
        parser.add_argument('name', help='Library model name')
        parser.add_argument('--samples', type=int, help='Sampled points per check')
        parser.add_argument('--seed', type=int, default=0)
        parser.add_argument('--out', help='Output directory')

    def handle(self, *args, **options):
        raw = {'kind': 'check-model', 'name': f'check-{options["name"]}', 'model': {'name': options['name']}}
        if options['samples']:
            raw['samples'] = options['samples']
        try:
            runner = ScenarioRunner(raw, seed=options['seed'], out=options['out'], echo=self.stdout.write)
            runner.run()
        except SimulationError as exc:
            fail(self, exc)
        self.stdout.write(self.style.SUCCESS(f'Model {options["name"]} passed all checks'))
