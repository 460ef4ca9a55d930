"""
Shared command plumbing: the global flags every lab command takes and the
mapping from domain errors onto exit codes.

    0 ok, 1 other failure, 2 usage, 3 missing artifact, 4 config mismatch, 5 diverged
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from apps.corpus.exceptions import CorpusError
from apps.decoding.exceptions import DecodingError
from apps.experiments.exceptions import ConfigError, ConfigMismatch, MissingArtifact
from apps.experiments.services import RunConfig, RunDir, load_run_config
from apps.seqmodels.exceptions import VocabMismatch
from apps.training.exceptions import Diverged, InvalidSchedule

logger = logging.getLogger(__name__)

EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_MISMATCH = 4
EXIT_DIVERGED = 5

EXIT_CODES = (
    ((ConfigError, CorpusError, DecodingError, InvalidSchedule), EXIT_USAGE),
    ((MissingArtifact,), EXIT_MISSING),
    ((ConfigMismatch, VocabMismatch), EXIT_MISMATCH),
    ((Diverged,), EXIT_DIVERGED),
)


class LabCommand(BaseCommand):
    """Base for the lab commands; subclasses implement ``run(**options)``."""

    def add_arguments(self, parser):
        parser.add_argument('--config', help='Run config file (key = value lines)')
        parser.add_argument('--seed', type=int, help='Overrides the config seed')
        parser.add_argument('--out', help='Output directory for run directories')
        parser.add_argument(
            '--override',
            action='append',
            default=[],
            metavar='KEY=VALUE',
            help='Override one config key; repeatable',
        )
        parser.add_argument('--run', help='Run directory (default: newest run of this config under --out)')
        self.add_lab_arguments(parser)

    def add_lab_arguments(self, parser):
        pass

    def load_config(self, options) -> RunConfig:
        return load_run_config(options.get('config'), options.get('override') or (), options.get('seed'),
                               options.get('out'))

    def locate_run(self, config: RunConfig, options) -> RunDir:
        if options.get('run'):
            return RunDir.open(options['run'], config)
        return RunDir.latest(config)

    def handle(self, *args, **options):
        try:
            self.run(**options)
        except CommandError:
            raise
        except Exception as e:
            for types, code in EXIT_CODES:
                if isinstance(e, types):
                    logger.error(f"{type(self).__module__.rsplit('.', 1)[-1]} failed: {e}")
                    raise CommandError(str(e), returncode=code) from e
            raise

    def run(self, **options):
        raise NotImplementedError
