import json

from django.core.management.base import BaseCommand

from scenarios.runner import check_scenario, load_scenario
from utils.exceptions import SimulationError
from utils.helpers import create_success_response
from .run_scenario import fail


class Command(BaseCommand):
    help = 'Validate a scenario file against the schema without running it'

    def add_arguments(self, parser):
        parser.add_argument('--scenario', required=True, help='Path to a YAML or JSON scenario file')
        parser.add_argument('--json', action='store_true', help='Print the resolved scenario as JSON')

    def handle(self, *args, **options):
        try:
            resolved = check_scenario(load_scenario(options['scenario']))
        except SimulationError as exc:
            fail(self, exc)

        if options['json']:
            payload = create_success_response(f'Valid {resolved["kind"]} scenario', resolved)
            self.stdout.write(json.dumps(payload, indent=2, sort_keys=True))
        count = len(resolved['variants'])
        self.stdout.write(self.style.SUCCESS(
            f'{options["scenario"]}: valid {resolved["kind"]} scenario ({count} variant{"s" if count > 1 else ""})'
        ))
