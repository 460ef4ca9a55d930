default_app_config = 'apps.experiments.apps.ExperimentsConfig'
