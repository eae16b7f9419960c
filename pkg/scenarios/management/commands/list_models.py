from django.core.management.base import BaseCommand

from diffusions.library import build_model, list_models


class Command(BaseCommand):
    help = 'List the library models with their provenance and declared constants'

    def handle(self, *args, **options):
        for entry in list_models():
            model, domain = build_model(entry.name)
            declared = ', '.join(f'{key}={value:g}' for key, value in model.declared().items())
            self.stdout.write(self.style.SUCCESS(entry.name) + f'  [{domain.descriptor()["type"]}, {declared}]')
            self.stdout.write(f'    {entry.provenance}')
