"""
Check a run directory (or a corpus file) against the artifact formats and
the run's MANIFEST.

Usage:
    python manage.py validate runs/<run-id>
    python manage.py validate corpus.txt
"""

from pathlib import Path

from django.core.management.base import CommandError

from apps.experiments.management.base import EXIT_MISSING, LabCommand
from apps.experiments.services import validate_corpus, validate_run


class Command(LabCommand):
    help = 'Validate every artifact of a run directory, or one corpus file'

    def add_lab_arguments(self, parser):
        parser.add_argument('path', nargs='?', help='Run directory or corpus file (default: --run)')

    def run(self, **options):
        target = options['path'] or options['run']
        if not target:
            target = self.locate_run(self.load_config(options), options).path
        target = Path(target)
        if target.is_dir():
            problems = validate_run(target)
        elif target.is_file():
            vocab = target.with_name(f"{target.name}.vocab")
            problems = validate_corpus(target, vocab if vocab.is_file() else None)
        else:
            raise CommandError(f"MissingArtifact: {target}", returncode=EXIT_MISSING)

        for problem in problems:
            self.stdout.write(self.style.ERROR(f"  {problem}"))
        if problems:
            raise CommandError(f"{len(problems)} problems in {target}")
        self.stdout.write(self.style.SUCCESS(f"{target} is valid"))
