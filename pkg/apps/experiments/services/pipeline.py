"""
Experiment Pipeline.

The stages behind the management commands:

    synthesize        corpus file + vocab file
    prepare_run       new run directory holding the corpus and its vocabulary
    pretrain_gen      forward generator, backward generator and LM checkpoints,
                      plus the evaluator-side forward and backward generators
    pretrain_disc     discriminator checkpoint
    adv_train         adversarial checkpoints + metrics log (resumable)
    decode            decode file for the held-out contexts
    evaluate          EvalReport (ERE, AdverSuc, machine-vs-random) + CSV table
    study             evaluator, decoding or stability study table

Stages read only from the run directory (and, for prepare_run, the named
corpus) and refresh the run's MANIFEST when they finish.
"""

import logging
import math
import shutil
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Set, Tuple

from apps.corpus.services import Dialogue, Vocab, heldout_split, load_corpus, synth_corpus, train_split
from apps.decoding.services import ANTI_LM, BEAM, GREEDY, MMI_BACKWARD, SAMPLE, write_decodes
from apps.evaluation.services import (
    EVALUATOR_KINDS,
    HIER_NEURAL,
    SCENARIOS,
    DecodingSystem,
    EvalReport,
    EvaluatorSpec,
    adversarial_success,
    decode_benchmark,
    ere,
    evaluator_factory,
    evaluator_study,
    machine_episodes,
    machine_vs_random,
    write_metrics_csv,
    write_report,
)
from apps.experiments.exceptions import ConfigMismatch, ExperimentError, MissingArtifact
from apps.experiments.services.rundir import (
    ADVERSARIAL_DIR,
    CORPUS_FILE,
    DECODE_DIR,
    METRICS_FILE,
    REPORT_DIR,
    VOCAB_FILE,
    RunDir,
)
from apps.experiments.services.run_config import RunConfig
from apps.seqmodels.services import (
    EVALUATOR_BACKWARD_PREFIX,
    EVALUATOR_GENERATOR_PREFIX,
    CriticModel,
    load_checkpoint,
    load_model,
    save_checkpoint,
)
from apps.training.services import (
    REGS_PARTIAL,
    TrainResult,
    adversarial_train,
    pretrain_discriminator,
    pretrain_generator,
    pretrain_language_model,
    stability_study,
)

logger = logging.getLogger(__name__)

MLE, ADVERSARIAL, AUTO = 'mle', 'adversarial', 'auto'
MODEL_CHOICES = (AUTO, MLE, ADVERSARIAL)
STUDIES = ('evaluators', 'decoding', 'stability')
MIN_HELDOUT = 8

TRAINER_CHECKPOINTS = ('generator', 'backward', 'lm', 'discriminator')
ADVERSARIAL_MODELS = ('generator', 'discriminator', 'critic')
EVAL_GENERATOR, EVAL_BACKWARD = 'eval-generator', 'eval-backward'
# evaluator-side generators start from their own initialisation
EVALUATOR_SEED_OFFSET = 1


@dataclass
class RunCorpus:
    dialogues: List[Dialogue]
    vocab: Vocab

    @property
    def train(self) -> List[Dialogue]:
        return train_split(self.dialogues)

    @property
    def heldout(self) -> List[Dialogue]:
        return heldout_split(self.dialogues)

    def evaluation_set(self, limit: int) -> List[Dialogue]:
        """Held-out dialogues when there are enough of them, else the whole corpus."""
        pool = self.heldout if len(self.heldout) >= MIN_HELDOUT else self.dialogues
        return pool[:limit]


def _finite_or_none(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


# ----------------------------------------------------------------------
# Corpus
# ----------------------------------------------------------------------
def synthesize(seed: int, n: int, out) -> Tuple[Path, Path]:
    """Synthetic corpus at ``out`` plus its vocabulary at ``<out>.vocab``."""
    corpus = synth_corpus(seed, n, out)
    _, vocab = load_corpus(corpus)
    vocab_path = vocab.save(corpus.with_name(f"{corpus.name}.vocab"))
    return corpus, vocab_path


def prepare_run(config: RunConfig) -> Tuple[RunDir, RunCorpus]:
    """
    New run directory with the corpus copied (or synthesized) into it.

    Raises:
        MissingArtifact: ``paths.corpus`` names a file that does not exist
    """
    source = config.corpus_path
    if source is not None and not source.is_file():
        raise MissingArtifact(source)
    run = RunDir.create(config)
    target = run.file(CORPUS_FILE)
    if source is not None:
        shutil.copyfile(source, target)
    else:
        synth_corpus(config.seed, config['corpus.n'], target)
    dialogues, vocab = load_corpus(target, heldout_fraction=config['corpus.heldout_fraction'])
    vocab.save(run.file(VOCAB_FILE))
    return run, RunCorpus(dialogues, vocab)


def load_run_corpus(run: RunDir, config: RunConfig) -> RunCorpus:
    vocab = Vocab.load(run.require(VOCAB_FILE))
    dialogues, _ = load_corpus(run.require(CORPUS_FILE), vocab, config['corpus.heldout_fraction'])
    return RunCorpus(dialogues, vocab)


# ----------------------------------------------------------------------
# Pretraining
# ----------------------------------------------------------------------
def pretrain_gen(config: RunConfig, run: RunDir, corpus: RunCorpus) -> Dict[str, List[float]]:
    """
    MLE forward generator, backward generator and response LM, and a second
    forward/backward pair for the COMBINED_LINEAR evaluator features; returns
    their perplexity curves.
    """
    dims = config.model_dims(len(corpus.vocab))
    common = dict(
        seed=config.seed,
        epochs=config['pretrain.epochs'],
        batch_size=config['pretrain.batch_size'],
        lr=config['pretrain.lr'],
    )
    tricks = dict(
        min_length=config['corpus.min_length'],
        tfidf_cap=config['corpus.tfidf_cap'] or None,
        heldout=corpus.heldout or None,
    )
    results = {
        'generator': pretrain_generator(corpus.train, corpus.vocab, dims, **common, **tricks),
        'backward': pretrain_generator(corpus.train, corpus.vocab, dims, **common, **tricks, backward=True),
        'lm': pretrain_language_model(corpus.train, dims, **common),
    }
    evaluator_side = dict(common, seed=config.seed + EVALUATOR_SEED_OFFSET)
    results[EVAL_GENERATOR] = pretrain_generator(
        corpus.train, corpus.vocab, dims, **evaluator_side, **tricks, prefix=EVALUATOR_GENERATOR_PREFIX,
    )
    results[EVAL_BACKWARD] = pretrain_generator(
        corpus.train, corpus.vocab, dims, **evaluator_side, **tricks,
        backward=True, prefix=EVALUATOR_BACKWARD_PREFIX,
    )
    for name, result in results.items():
        save_checkpoint(
            run.checkpoint(name), result.model, corpus.vocab.hash, config.hash,
            extra={'perplexities': [_finite_or_none(p) for p in result.perplexities]},
        )
    run.write_manifest()
    return {name: result.perplexities for name, result in results.items()}


def pretrain_disc(config: RunConfig, run: RunDir, corpus: RunCorpus) -> float:
    """Discriminator on human vs. generated responses; returns its held-out accuracy."""
    generator = load_model(run.require_checkpoint('generator'), corpus.vocab.hash)
    backward = load_model(run.require_checkpoint('backward'), corpus.vocab.hash)
    result = pretrain_discriminator(
        corpus.train,
        generator,
        config.model_dims(len(corpus.vocab)),
        backward_generator=backward,
        seed=config.seed,
        epochs=config['pretrain.disc_epochs'],
        batch_size=config['pretrain.batch_size'],
        lr=config['train.disc_lr'],
        config=config.decode_config(),
        heldout=corpus.heldout or None,
        partial=config['pretrain.partial'] or config['train.mode'] == REGS_PARTIAL,
        stop_ids=corpus.vocab.stop_ids,
    )
    save_checkpoint(
        run.checkpoint('discriminator'), result.model, corpus.vocab.hash, config.hash,
        extra={'heldout_accuracy': _finite_or_none(result.heldout_accuracy)},
    )
    run.write_manifest()
    return result.heldout_accuracy


# ----------------------------------------------------------------------
# Adversarial training
# ----------------------------------------------------------------------
def _load_adversarial(run: RunDir, config: RunConfig, corpus: RunCorpus, iteration: int):
    models = []
    for name in ADVERSARIAL_MODELS:
        path = run.adversarial_checkpoint(name, iteration)
        checkpoint = load_checkpoint(path, corpus.vocab.hash)
        if checkpoint.config_hash != config.hash:
            raise ConfigMismatch(config.hash, checkpoint.config_hash)
        models.append(checkpoint.build())
    return models


def adv_train(config: RunConfig, run: RunDir, corpus: RunCorpus, resume: bool = False) -> TrainResult:
    """
    Adversarial training from the pretrained checkpoints, or, with ``resume``,
    from the newest adversarial checkpoint until ``train.iterations`` in total.

    Raises:
        MissingArtifact: a pretrained checkpoint is missing, or nothing to resume
        ConfigMismatch: the resumed checkpoints carry another config hash
        Diverged: training produced a non-finite value
    """
    schedule = config.schedule()
    start = 0
    if resume:
        start = run.latest_adversarial()
        if start is None:
            raise MissingArtifact(ADVERSARIAL_DIR)
        generator, discriminator, critic = _load_adversarial(run, config, corpus, start)
        schedule = replace(schedule, iterations=max(schedule.iterations - start, 0))
        logger.info(f"Resuming adversarial training after iteration {start}")
    else:
        generator = load_model(run.require_checkpoint('generator'), corpus.vocab.hash)
        discriminator = load_model(run.require_checkpoint('discriminator'), corpus.vocab.hash)
        critic = CriticModel(config.model_dims(len(corpus.vocab)), seed=config.seed)

    try:
        return adversarial_train(
            corpus.train,
            generator,
            discriminator,
            critic,
            schedule,
            config_hash=config.hash,
            vocab_hash=corpus.vocab.hash,
            heldout=corpus.heldout or None,
            metrics_path=run.file(METRICS_FILE),
            checkpoint_dir=run.file(ADVERSARIAL_DIR),
            start_iteration=start,
        )
    finally:
        run.write_manifest()


# ----------------------------------------------------------------------
# Decoding and evaluation
# ----------------------------------------------------------------------
def load_generator(run: RunDir, config: RunConfig, corpus: RunCorpus, model: str = AUTO):
    """(name, generator): the newest adversarial generator, or the MLE one."""
    if model not in MODEL_CHOICES:
        raise ExperimentError(f"model must be one of {', '.join(MODEL_CHOICES)}")
    iteration = run.latest_adversarial() if model != MLE else None
    if model == ADVERSARIAL and iteration is None:
        raise MissingArtifact(ADVERSARIAL_DIR)
    if iteration is not None:
        path = run.adversarial_checkpoint('generator', iteration)
        return f"{ADVERSARIAL}-{config['train.mode'].lower()}", load_model(path, corpus.vocab.hash)
    return MLE, load_model(run.require_checkpoint('generator'), corpus.vocab.hash)


def decoding_system(run: RunDir, config: RunConfig, corpus: RunCorpus, generator, strategy: str) -> DecodingSystem:
    backward = lm = None
    if strategy == MMI_BACKWARD:
        backward = load_model(run.require_checkpoint('backward'), corpus.vocab.hash)
    if strategy == ANTI_LM:
        lm = load_model(run.require_checkpoint('lm'), corpus.vocab.hash)
    return DecodingSystem(generator, config.decode_config(strategy=strategy), corpus.vocab.stop_ids, backward, lm)


def decode(config: RunConfig, run: RunDir, corpus: RunCorpus, model: str = AUTO,
           strategy: Optional[str] = None) -> Path:
    strategy = strategy or config['decode.strategy']
    name, generator = load_generator(run, config, corpus, model)
    system = decoding_system(run, config, corpus, generator, strategy)
    dialogues = corpus.evaluation_set(config['eval.dialogues'])
    decoded = system.decode([d.context_tokens for d in dialogues], config.seed)
    path = write_decodes(run.file(f"{DECODE_DIR}/{name}-{strategy}.tsv"), corpus.vocab, decoded)
    logger.info(f"Decoded {len(decoded)} contexts with {name}/{strategy} into {path}")
    run.write_manifest()
    return path


def trainer_parameter_names(run: RunDir, corpus: RunCorpus) -> Set[str]:
    """Parameter names of the pretrained models and the newest adversarial set."""
    paths = [run.checkpoint(name) for name in TRAINER_CHECKPOINTS]
    iteration = run.latest_adversarial()
    if iteration is not None:
        paths += [run.adversarial_checkpoint(name, iteration) for name in ADVERSARIAL_MODELS]
    names: Set[str] = set()
    for path in paths:
        if path.is_file():
            names.update(load_checkpoint(path, corpus.vocab.hash).parameters)
    return names


def _factory(config: RunConfig, run: RunDir, corpus: RunCorpus, spec: EvaluatorSpec):
    forward = backward = None
    if spec.needs_generators:
        forward = load_model(run.require_checkpoint(EVAL_GENERATOR), corpus.vocab.hash)
        backward = load_model(run.require_checkpoint(EVAL_BACKWARD), corpus.vocab.hash)
    return evaluator_factory(
        spec, config.model_dims(len(corpus.vocab)), forward, backward,
        epochs=config['eval.epochs'], batch_size=config['pretrain.batch_size'],
        trainer_names=trainer_parameter_names(run, corpus),
    )


def evaluate(config: RunConfig, run: RunDir, corpus: RunCorpus, scenario: Optional[str] = None,
             evaluator: Optional[str] = None, model: str = AUTO) -> EvalReport:
    """
    Evaluator reliability over every scenario (or only ``scenario``), and
    for a full evaluation also AdverSuc and machine-vs-random accuracy of
    the generator's decodes.
    """
    spec = config.evaluator_spec(evaluator)
    factory = _factory(config, run, corpus, spec)
    strategy = config['decode.strategy']
    name, generator = load_generator(run, config, corpus, model)
    dialogues = corpus.evaluation_set(config['eval.dialogues'])
    outputs = machine_episodes(decoding_system(run, config, corpus, generator, strategy), dialogues, config.seed)

    scenarios = (scenario,) if scenario else SCENARIOS
    reliability = ere(factory, dialogues, outputs, config.seed, scenarios)
    success = separability = None
    if scenario is None:
        success = adversarial_success(factory, dialogues, outputs, config.seed)
        separability = machine_vs_random(factory, outputs, dialogues, config.seed)

    report = EvalReport(
        model=f"{name}-{strategy}",
        evaluator_kind=spec.kind,
        seeds=[config.seed],
        config_hash=config.hash,
        adver_suc=success,
        scenario_adver_suc=reliability.adver_suc,
        deviations=reliability.deviations,
        ere=reliability.ere,
        machine_vs_random=separability,
    )
    stem = f"report-{scenario.lower()}" if scenario else 'report'
    write_report(run.file(f"{REPORT_DIR}/{stem}.json"), report)
    write_metrics_csv(run.file(f"{REPORT_DIR}/{stem}.csv"), report.rows())
    run.write_manifest()
    return report


# ----------------------------------------------------------------------
# Studies
# ----------------------------------------------------------------------
def _evaluator_rows(config: RunConfig, run: RunDir, corpus: RunCorpus) -> list:
    dialogues = corpus.evaluation_set(config['eval.dialogues'])
    name, generator = load_generator(run, config, corpus)
    outputs = machine_episodes(
        decoding_system(run, config, corpus, generator, config['decode.strategy']), dialogues, config.seed,
    )
    factories = {kind: _factory(config, run, corpus, EvaluatorSpec.for_kind(kind)) for kind in EVALUATOR_KINDS}
    result = evaluator_study(factories, dialogues, outputs, seeds=config['eval.seeds'])
    return result.rows() + [('evaluators', 'ordered_seeds', float(result.ordered_seeds))]


def _decoding_rows(config: RunConfig, run: RunDir, corpus: RunCorpus) -> list:
    dialogues = corpus.evaluation_set(config['eval.dialogues'])
    _, mle = load_generator(run, config, corpus, MLE)
    systems = {
        f"{MLE}-{strategy}": decoding_system(run, config, corpus, mle, strategy)
        for strategy in (GREEDY, BEAM, SAMPLE, MMI_BACKWARD, ANTI_LM)
    }
    if run.latest_adversarial() is not None:
        name, adversarial = load_generator(run, config, corpus, ADVERSARIAL)
        systems[f"{name}-{BEAM}"] = decoding_system(run, config, corpus, adversarial, BEAM)
    factory = _factory(config, run, corpus, EvaluatorSpec.for_kind(HIER_NEURAL))
    return decode_benchmark(systems, dialogues, factory, config.seed)


def _stability_rows(config: RunConfig, run: RunDir, corpus: RunCorpus) -> list:
    generator = load_model(run.require_checkpoint('generator'), corpus.vocab.hash)
    discriminator = load_model(run.require_checkpoint('discriminator'), corpus.vocab.hash)
    critic = CriticModel(config.model_dims(len(corpus.vocab)), seed=config.seed)
    runs = stability_study(
        corpus.train, generator, discriminator, critic, config.schedule(),
        seeds=config['eval.seeds'], heldout=corpus.heldout or None,
    )
    rows = []
    for item in runs:
        label = f"{item.teacher_forcing.lower()}.seed{item.seed}"
        rows.append((label, 'perplexity_ratio', item.ratio))
        rows.append((label, 'diverged', float(item.diverged)))
    return rows


def study(config: RunConfig, run: RunDir, corpus: RunCorpus, name: str) -> Path:
    """Run one study and write its table to reports/study-<name>.csv."""
    builders = {
        'evaluators': _evaluator_rows,
        'decoding': _decoding_rows,
        'stability': _stability_rows,
    }
    if name not in builders:
        raise ExperimentError(f"study must be one of {', '.join(STUDIES)}")
    rows = builders[name](config, run, corpus)
    path = write_metrics_csv(run.file(f"{REPORT_DIR}/study-{name}.csv"), rows)
    logger.info(f"{name} study: {len(rows)} rows written to {path}")
    run.write_manifest()
    return path
