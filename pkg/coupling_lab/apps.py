from django.apps import AppConfig


class CouplingLabConfig(AppConfig):
    name = 'coupling_lab'
    verbose_name = 'Coupled diffusion pairs'
