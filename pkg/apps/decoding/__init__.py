default_app_config = 'apps.decoding.apps.DecodingConfig'
