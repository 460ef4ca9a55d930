"""
Write a synthetic dialogue corpus and its vocabulary.

Usage:
    python manage.py synth --seed 1 --n 500 --out corpus.txt
"""

from pathlib import Path

from django.conf import settings
from django.core.management.base import CommandError

from apps.experiments.management.base import EXIT_USAGE, LabCommand
from apps.experiments.services import synthesize


class Command(LabCommand):
    help = 'Write a synthetic corpus (and <out>.vocab) from the closed-form dialogue grammar'

    def add_lab_arguments(self, parser):
        parser.add_argument('--n', type=int, default=getattr(settings, 'LAB_SYNTH_DIALOGUES', 200),
                            help='Number of corpus lines')

    def run(self, **options):
        if options['n'] < 1:
            raise CommandError(f"--n must be >= 1, got {options['n']}", returncode=EXIT_USAGE)
        seed = options['seed'] if options['seed'] is not None else getattr(settings, 'LAB_SEED', 1)
        out = Path(options['out']) if options['out'] else Path(getattr(settings, 'LAB_RUNS_DIR', 'runs')) / 'corpus.txt'
        out.parent.mkdir(parents=True, exist_ok=True)
        corpus, vocab = synthesize(seed, options['n'], out)
        self.stdout.write(self.style.SUCCESS(f"Wrote {options['n']} dialogues to {corpus} (vocab {vocab})"))
