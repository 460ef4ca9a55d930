"""
Decode the held-out contexts of a run.

Usage:
    python manage.py decode --config run.cfg --out runs/ [--model mle] [--strategy sample]
"""

from apps.decoding.services import STRATEGIES
from apps.experiments.management.base import LabCommand
from apps.experiments.services import AUTO, MODEL_CHOICES, decode, load_run_corpus


class Command(LabCommand):
    help = 'Decode held-out contexts with the MLE or adversarial generator'

    def add_lab_arguments(self, parser):
        parser.add_argument('--model', choices=MODEL_CHOICES, default=AUTO,
                            help='Generator to decode with (auto: adversarial when trained)')
        parser.add_argument('--strategy', choices=STRATEGIES, help='Overrides decode.strategy')

    def run(self, **options):
        config = self.load_config(options)
        run = self.locate_run(config, options)
        path = decode(config, run, load_run_corpus(run, config), options['model'], options['strategy'])
        self.stdout.write(self.style.SUCCESS(f"Decodes written to {path}"))
