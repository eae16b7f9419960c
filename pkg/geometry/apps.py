from django.apps import AppConfig


class GeometryConfig(AppConfig):
    name = 'geometry'
    verbose_name = 'Domains and boundary crossing'
