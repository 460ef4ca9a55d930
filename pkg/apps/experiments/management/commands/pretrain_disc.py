"""
Pretrain the discriminator of an existing run on human responses against
responses from the pretrained generator.

Usage:
    python manage.py pretrain-disc --config run.cfg --out runs/
"""

from apps.experiments.management.base import LabCommand
from apps.experiments.services import load_run_corpus, pretrain_disc


class Command(LabCommand):
    help = 'Pretrain the discriminator against the pretrained generator'

    def run(self, **options):
        config = self.load_config(options)
        run = self.locate_run(config, options)
        accuracy = pretrain_disc(config, run, load_run_corpus(run, config))
        self.stdout.write(self.style.SUCCESS(f"Discriminator written to {run.path} (held-out accuracy {accuracy:.3f})"))
