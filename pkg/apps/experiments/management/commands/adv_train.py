"""
Adversarial training of a run's pretrained generator against its
discriminator.

Usage:
    python manage.py adv-train --config run.cfg --out runs/
    python manage.py adv-train --config run.cfg --run runs/<run-id> --resume
"""

from apps.experiments.management.base import LabCommand
from apps.experiments.services import adv_train, load_run_corpus


class Command(LabCommand):
    help = 'Run adversarial training (REINFORCE or REGS) and write checkpoints and the metrics log'

    def add_lab_arguments(self, parser):
        parser.add_argument('--resume', action='store_true',
                            help='Continue from the newest adversarial checkpoint of the run')

    def run(self, **options):
        config = self.load_config(options)
        run = self.locate_run(config, options)
        result = adv_train(config, run, load_run_corpus(run, config), resume=options['resume'])
        if not result.metrics:
            self.stdout.write(self.style.WARNING('No iterations left to run'))
            return
        last = result.metrics[-1]
        self.stdout.write(
            f"Iteration {last.iteration}: reward {last.g_reward_mean:.4f}, perplexity {last.perplexity:.3f}"
        )
        self.stdout.write(self.style.SUCCESS(f"{len(result.checkpoints)} checkpoints written to {run.path}"))
