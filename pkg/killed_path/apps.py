from django.apps import AppConfig


class KilledPathConfig(AppConfig):
    name = 'killed_path'
    verbose_name = 'Killed diffusion paths'
