default_app_config = 'apps.training.apps.TrainingConfig'
