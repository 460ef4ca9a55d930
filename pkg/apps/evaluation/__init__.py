default_app_config = 'apps.evaluation.apps.EvaluationConfig'
