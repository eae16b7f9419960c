from django.apps import AppConfig


class UtilsConfig(AppConfig):
    verbose_name = 'Shared utilities'
    name = 'utils'
