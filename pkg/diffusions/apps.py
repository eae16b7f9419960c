from django.apps import AppConfig


class DiffusionsConfig(AppConfig):
    name = 'diffusions'
    verbose_name = 'Time-periodic diffusion models'
