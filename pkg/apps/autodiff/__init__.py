default_app_config = 'apps.autodiff.apps.AutodiffConfig'
