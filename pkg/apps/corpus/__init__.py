default_app_config = 'apps.corpus.apps.CorpusConfig'
