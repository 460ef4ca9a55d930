"""
Start a run: copy (or synthesize) the corpus and pretrain the forward
generator, the backward generator and the response language model by MLE.

Usage:
    python manage.py pretrain-gen --config run.cfg --out runs/
"""

from apps.experiments.management.base import LabCommand
from apps.experiments.services import pretrain_gen, prepare_run


class Command(LabCommand):
    help = 'Create a run directory and pretrain the generators and the language model'

    def run(self, **options):
        config = self.load_config(options)
        run, corpus = prepare_run(config)
        self.stdout.write(f"Run {run.path.name}: {len(corpus.train)} training dialogues, vocab {len(corpus.vocab)}")
        curves = pretrain_gen(config, run, corpus)
        for name, perplexities in curves.items():
            self.stdout.write(f"  {name}: perplexity {perplexities[0]:.3f} -> {perplexities[-1]:.3f}")
        self.stdout.write(self.style.SUCCESS(f"Pretrained checkpoints written to {run.path}"))
