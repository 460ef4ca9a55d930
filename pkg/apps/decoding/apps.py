from django.apps import AppConfig


class DecodingConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.decoding'
    verbose_name = 'Decoding'
