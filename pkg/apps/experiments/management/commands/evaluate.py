"""
Evaluate a run: evaluator reliability (ERE), adversarial success and
machine-vs-random accuracy, or one of the studies.

Usage:
    python manage.py evaluate --config run.cfg --out runs/
    python manage.py evaluate --config run.cfg --out runs/ --scenario human-vs-random
    python manage.py evaluate --config run.cfg --out runs/ --study evaluators
"""

from django.core.management.base import CommandError

from apps.evaluation.exceptions import EvaluationError
from apps.evaluation.services import EVALUATOR_KINDS, scenario_from_flag
from apps.experiments.management.base import EXIT_USAGE, LabCommand
from apps.experiments.services import AUTO, MODEL_CHOICES, STUDIES, evaluate, load_run_corpus, study


class Command(LabCommand):
    help = 'Write an evaluation report (or a study table) for a run'

    def add_lab_arguments(self, parser):
        parser.add_argument('--scenario', help='Only this reliability scenario, e.g. human-vs-random')
        parser.add_argument('--evaluator', choices=EVALUATOR_KINDS, help='Overrides eval.evaluator')
        parser.add_argument('--model', choices=MODEL_CHOICES, default=AUTO)
        parser.add_argument('--study', choices=STUDIES, help='Run a study instead of a single report')

    def run(self, **options):
        scenario = None
        if options['scenario']:
            try:
                scenario = scenario_from_flag(options['scenario'])
            except EvaluationError as e:
                raise CommandError(str(e), returncode=EXIT_USAGE) from e
        config = self.load_config(options)
        run = self.locate_run(config, options)
        corpus = load_run_corpus(run, config)

        if options['study']:
            path = study(config, run, corpus, options['study'])
            self.stdout.write(self.style.SUCCESS(f"{options['study']} study written to {path}"))
            return

        report = evaluate(config, run, corpus, scenario, options['evaluator'], options['model'])
        for kind, value in sorted(report.scenario_adver_suc.items()):
            self.stdout.write(f"  {kind}: AdverSuc {value:.3f}")
        self.stdout.write(f"ERE ({report.evaluator_kind}): {report.ere:.4f}")
        if report.adver_suc is not None:
            self.stdout.write(
                f"{report.model}: AdverSuc {report.adver_suc:.3f}, machine-vs-random {report.machine_vs_random:.3f}"
            )
        self.stdout.write(self.style.SUCCESS(f"Report written to {run.path}"))
