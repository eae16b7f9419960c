from django.apps import AppConfig


class FlemingViotConfig(AppConfig):
    name = 'fleming_viot'
    verbose_name = 'Fleming-Viot particle system'
