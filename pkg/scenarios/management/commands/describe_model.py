import json

from django.core.management.base import BaseCommand, CommandError

from diffusions.library import build_model, get_entry
from utils.exceptions import UnknownModelError


class Command(BaseCommand):
    help = 'Describe one library model'

    def add_arguments(self, parser):
        parser.add_argument('name', help='Library model name')

    def handle(self, *args, **options):
        try:
            entry = get_entry(options['name'])
        except UnknownModelError as exc:
            self.stderr.write(self.style.ERROR(exc.detail))
            raise CommandError(exc.detail)

        model, domain = build_model(entry.name)
        self.stdout.write(self.style.SUCCESS(entry.name))
        self.stdout.write(f'  provenance: {entry.provenance}')
        self.stdout.write(f'  description: {entry.description}')
        self.stdout.write(f'  default domain: {json.dumps(domain.descriptor())}')
        if entry.default_params:
            self.stdout.write(f'  default params: {json.dumps(entry.default_params)}')
        for key, value in model.declared().items():
            self.stdout.write(f'  declared {key}: {value:g}')
