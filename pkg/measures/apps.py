from django.apps import AppConfig


class MeasuresConfig(AppConfig):
    name = 'measures'
    verbose_name = 'Empirical measures and distances'
