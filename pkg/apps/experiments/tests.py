import json
import tempfile
from datetime import datetime, timezone
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from apps.corpus.services import load_corpus
from apps.evaluation.services import HUMAN_VS_RANDOM, read_report
from apps.experiments.exceptions import ConfigError, MissingArtifact
from apps.experiments.management.base import EXIT_DIVERGED, LabCommand
from apps.experiments.services import (
    ADVERSARIAL_DIR,
    EVAL_BACKWARD,
    EVAL_GENERATOR,
    METRICS_FILE,
    RunDir,
    file_hash,
    load_run_config,
    load_run_corpus,
    parse_config_text,
    run_id,
    trainer_parameter_names,
    validate_run,
)
from apps.seqmodels.services import in_evaluator_namespace, load_model
from apps.training.exceptions import Diverged

TINY = [
    'corpus.n=24',
    'corpus.heldout_fraction=0.25',
    'model.embed=4',
    'model.hidden=6',
    'pretrain.epochs=1',
    'pretrain.batch_size=8',
    'pretrain.disc_epochs=1',
    'train.iterations=2',
    'train.d_steps=1',
    'train.checkpoint_every=1',
    'decode.beam_width=2',
    'decode.max_len=6',
    'eval.epochs=1',
    'eval.dialogues=16',
    'eval.seeds=1',
]


def _call(name, *args, **options):
    out = StringIO()
    call_command(name, *args, stdout=out, **options)
    return out.getvalue()


class RunConfigTests(SimpleTestCase):

    def test_file_then_overrides_then_flags(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'run.cfg'
            path.write_text('# smoke\nmodel.hidden = 16\ntrain.d_steps = 3\n', encoding='utf-8')
            config = load_run_config(path, ['train.d_steps=4'], seed=9, out=tmp)
        self.assertEqual(config['model.hidden'], 16)
        self.assertEqual(config['train.d_steps'], 4)
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.schedule().d_steps, 4)

    def test_hash_ignores_locations(self):
        first = load_run_config(overrides=['paths.corpus=a.txt'], out='/tmp/a')
        second = load_run_config(overrides=['paths.corpus=b.txt'], out='/tmp/b')
        self.assertEqual(first.hash, second.hash)
        self.assertNotEqual(first.hash, load_run_config(overrides=['train.d_steps=2']).hash)

    def test_canonical_text_is_sorted(self):
        lines = load_run_config().canonical_text().splitlines()
        self.assertEqual(lines, sorted(lines))
        self.assertFalse(any(line.startswith(('out ', 'paths.')) for line in lines))

    def test_equivalent_spellings_hash_alike(self):
        self.assertEqual(
            load_run_config(overrides=['eval.seeds=1, 2', 'train.rl_lr=1e-2']).hash,
            load_run_config(overrides=['eval.seeds=1,2', 'train.rl_lr=0.01']).hash,
        )

    def test_malformed_line(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config_text('model.hidden = 4\njust words\n')
        self.assertEqual(ctx.exception.line_no, 2)

    def test_unknown_key_and_bad_value(self):
        with self.assertRaises(ConfigError):
            load_run_config(overrides=['model.depth=3'])
        with self.assertRaises(ConfigError):
            load_run_config(overrides=['decode.strategy=telepathy'])
        with self.assertRaises(ConfigError):
            load_run_config(overrides=['train.mode=REGS_PARTIAL', 'pretrain.disc_epochs=0'])


class RunDirTests(SimpleTestCase):

    def test_run_id(self):
        now = datetime(2024, 1, 2, 3, 4, 5, 6, tzinfo=timezone.utc)
        self.assertEqual(run_id('abcdef0123456789', now), '20240102T030405000006Z-abcdef01')

    def test_metrics_hash_ignores_wall_clock(self):
        with tempfile.TemporaryDirectory() as tmp:
            first, second = Path(tmp) / 'a', Path(tmp) / 'b'
            for folder, wall in ((first, 5), (second, 900)):
                folder.mkdir()
                (folder / METRICS_FILE).write_text(json.dumps({'iteration': 1, 'wall_ms': wall}) + '\n')
            self.assertEqual(file_hash(first / METRICS_FILE), file_hash(second / METRICS_FILE))

    def test_latest_without_runs(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(MissingArtifact):
                RunDir.latest(load_run_config(out=tmp))


class _DivergingCommand(LabCommand):
    def run(self, **options):
        raise Diverged(3)


class CommandTests(SimpleTestCase):

    def test_synth_writes_loadable_corpus(self):
        with tempfile.TemporaryDirectory() as tmp:
            corpus = Path(tmp) / 'corpus.txt'
            _call('synth', seed=2, n=12, out=str(corpus))
            dialogues, vocab = load_corpus(corpus)
            self.assertEqual(len(dialogues), 12)
            self.assertTrue((Path(tmp) / 'corpus.txt.vocab').is_file())
            self.assertIn('is valid', _call('validate', str(corpus)))

    def test_synth_rejects_empty_corpus(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                _call('synth', n=0, out=str(Path(tmp) / 'corpus.txt'))
        self.assertEqual(ctx.exception.returncode, 2)

    def test_missing_pretrained_run(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                _call('pretrain_disc', out=tmp, override=TINY)
        self.assertEqual(ctx.exception.returncode, 3)

    def test_bad_override_is_usage_error(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                _call('pretrain_gen', out=tmp, override=['model.hidden=zero'])
        self.assertEqual(ctx.exception.returncode, 2)

    def test_divergence_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            call_command(_DivergingCommand(), stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, EXIT_DIVERGED)


class PipelineTests(SimpleTestCase):
    """synth -> pretrain -> adversarial training -> evaluation at toy scale."""

    def _pipeline(self, out, evaluate_options=None):
        _call('pretrain_gen', out=out, override=TINY)
        _call('pretrain_disc', out=out, override=TINY)
        _call('adv_train', out=out, override=TINY)
        _call('evaluate', out=out, override=TINY, **(evaluate_options or {}))
        return RunDir.latest(load_run_config(overrides=TINY, out=out))

    def test_full_pipeline(self):
        with tempfile.TemporaryDirectory() as tmp:
            run = self._pipeline(tmp)
            report = read_report(run.file('reports/report.json'))
            self.assertEqual(len(report.scenario_adver_suc), 4)
            self.assertIsNotNone(report.adver_suc)
            self.assertIsNotNone(report.machine_vs_random)
            self.assertEqual(report.config_hash, load_run_config(overrides=TINY).hash)

            records = [json.loads(line) for line in run.file(METRICS_FILE).read_text().splitlines()]
            self.assertEqual([r['iteration'] for r in records], [1, 2])
            self.assertEqual(run.latest_adversarial(), 2)
            self.assertIn('reports/report.json', run.read_manifest())
            self.assertEqual(validate_run(run.path), [])

            _call('decode', out=tmp, override=TINY, model='mle', strategy='greedy')
            self.assertTrue(run.file('decodes/mle-greedy.tsv').is_file())

    def test_single_scenario_and_reruns_match(self):
        manifests = []
        for _ in range(2):
            with tempfile.TemporaryDirectory() as tmp:
                run = self._pipeline(tmp, {'scenario': 'human-vs-random'})
                report = read_report(run.file('reports/report-human_vs_random.json'))
                self.assertEqual(set(report.scenario_adver_suc), {HUMAN_VS_RANDOM})
                self.assertIsNone(report.adver_suc)
                manifests.append(run.read_manifest())
        self.assertEqual(manifests[0], manifests[1])

    def test_resume_and_config_mismatch(self):
        with tempfile.TemporaryDirectory() as tmp:
            _call('pretrain_gen', out=tmp, override=TINY)
            _call('pretrain_disc', out=tmp, override=TINY)
            _call('adv_train', out=tmp, override=TINY)
            run = RunDir.latest(load_run_config(overrides=TINY, out=tmp))

            for name in ('generator', 'discriminator', 'critic'):
                (run.path / ADVERSARIAL_DIR / f"{name}-00002.json").unlink()
            lines = run.file(METRICS_FILE).read_text().splitlines()
            run.file(METRICS_FILE).write_text(lines[0] + '\n')

            _call('adv_train', out=tmp, override=TINY, run=str(run.path), resume=True)
            records = [json.loads(line) for line in run.file(METRICS_FILE).read_text().splitlines()]
            self.assertEqual([r['iteration'] for r in records], [1, 2])
            self.assertEqual(run.latest_adversarial(), 2)

            with self.assertRaises(CommandError) as ctx:
                _call('adv_train', out=tmp, override=TINY + ['train.d_steps=2'], run=str(run.path), resume=True)
            self.assertEqual(ctx.exception.returncode, 4)

    def test_evaluator_generators_are_independent_of_trainer_models(self):
        with tempfile.TemporaryDirectory() as tmp:
            _call('pretrain_gen', out=tmp, override=TINY)
            config = load_run_config(overrides=TINY, out=tmp)
            run = RunDir.latest(config)
            corpus = load_run_corpus(run, config)
            trainer_names = trainer_parameter_names(run, corpus)
            self.assertTrue(trainer_names)
            for name in (EVAL_GENERATOR, EVAL_BACKWARD):
                model = load_model(run.require_checkpoint(name), corpus.vocab.hash)
                self.assertTrue(in_evaluator_namespace(model.prefix))
                self.assertFalse(set(model.params.names) & trainer_names)

    def test_validate_flags_tampering(self):
        with tempfile.TemporaryDirectory() as tmp:
            _call('pretrain_gen', out=tmp, override=TINY)
            run = RunDir.latest(load_run_config(overrides=TINY, out=tmp))
            with run.file('corpus.txt').open('a', encoding='utf-8') as handle:
                handle.write('hello there\tgeneral kenobi\n')
            problems = validate_run(run.path)
            self.assertTrue(any('corpus.txt content changed' in p for p in problems))
            with self.assertRaises(CommandError):
                _call('validate', str(run.path))
