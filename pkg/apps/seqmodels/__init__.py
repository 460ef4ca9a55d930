default_app_config = 'apps.seqmodels.apps.SeqmodelsConfig'
