from django.apps import AppConfig


class SeqmodelsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.seqmodels'
    verbose_name = 'Sequence Models'
