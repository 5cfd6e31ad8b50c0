from django.apps import AppConfig


class PowersimConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'powersim'
    verbose_name = 'Power simulation'
