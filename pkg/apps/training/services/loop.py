"""
Adversarial Training Loop.

For each iteration:
    D-steps: sample responses from G, update D on human (label 1) against
             the fresh samples (label 0)
    G-steps: sample, reward with D, update G by REINFORCE or REGS, then a
             teacher-forcing update on human responses, then a critic update

One JSON record per iteration goes to the metrics log:
{iteration, d_loss, g_reward_mean, critic_mse, perplexity, wall_ms, seed, config_hash}
"""

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings

from apps.corpus.services import Dialogue
from apps.seqmodels.services import save_checkpoint, strip_eos
from apps.training.exceptions import Diverged, InvalidSchedule
from apps.training.services.policy import (
    CONSTANT_ONE,
    CRITIC_LR,
    DISC_LR,
    RL_LR,
    TEACHER_FORCING_MODES,
    TF_OFF,
    critic_step,
    discriminator_step,
    reinforce_step,
    regs_step,
    sample_response,
    teacher_forcing_step,
)
from apps.training.services.pretrain import BATCH_SIZE, mix_partial, perplexity
from apps.training.services.rewards import (
    MAX_DECODE_LEN,
    MC_ROLLOUTS,
    MODES,
    REGS_PARTIAL,
    REINFORCE,
    WORKERS,
)

logger = logging.getLogger(__name__)

D_STEPS = getattr(settings, 'LAB_D_STEPS', 5)
G_STEPS = getattr(settings, 'LAB_G_STEPS', 1)
ITERATIONS = getattr(settings, 'LAB_ITERATIONS', 50)
CHECKPOINT_EVERY = getattr(settings, 'LAB_CHECKPOINT_EVERY', 10)
EVAL_DIALOGUES = 32

METRIC_FIELDS = ('iteration', 'd_loss', 'g_reward_mean', 'critic_mse', 'perplexity', 'wall_ms', 'seed', 'config_hash')


@dataclass(frozen=True)
class TrainSchedule:
    d_steps: int = D_STEPS
    g_steps: int = G_STEPS
    teacher_forcing: str = CONSTANT_ONE
    iterations: int = ITERATIONS
    batch_size: int = BATCH_SIZE
    seed: int = 0
    mode: str = REINFORCE
    rollouts: int = MC_ROLLOUTS
    checkpoint_every: int = CHECKPOINT_EVERY
    clip_advantage: bool = False
    rl_lr: float = RL_LR
    critic_lr: float = CRITIC_LR
    disc_lr: float = DISC_LR
    max_len: int = MAX_DECODE_LEN
    workers: int = WORKERS

    def __post_init__(self):
        if self.d_steps < 1 or self.g_steps < 1:
            raise InvalidSchedule("d_steps and g_steps must be >= 1")
        if self.teacher_forcing not in TEACHER_FORCING_MODES:
            raise InvalidSchedule(f"teacher_forcing must be one of {', '.join(TEACHER_FORCING_MODES)}")
        if self.mode not in MODES:
            raise InvalidSchedule(f"mode must be one of {', '.join(MODES)}")
        if self.iterations < 0 or self.batch_size < 1 or self.rollouts < 1:
            raise InvalidSchedule("iterations >= 0, batch_size >= 1 and rollouts >= 1 are required")
        if self.checkpoint_every < 1:
            raise InvalidSchedule("checkpoint_every must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationMetrics:
    iteration: int
    d_loss: float
    g_reward_mean: float
    critic_mse: float
    perplexity: float
    wall_ms: int
    seed: int
    config_hash: str
    d_updates: int = 0
    g_updates: int = 0

    def to_record(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    generator: object
    discriminator: object
    critic: object
    metrics: List[IterationMetrics] = field(default_factory=list)
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def perplexities(self) -> List[float]:
        return [m.perplexity for m in self.metrics]


class _NonFinite(ArithmeticError):
    pass


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, iteration]))


def draw_batch(dialogues: Sequence[Dialogue], batch_size: int, rng: np.random.Generator) -> List[Dialogue]:
    size = min(batch_size, len(dialogues))
    return [dialogues[i] for i in rng.choice(len(dialogues), size=size, replace=False)]


def _draw_seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2 ** 31 - 1))


def _snapshot(generator, discriminator, critic) -> Dict[str, Dict[str, np.ndarray]]:
    return {
        'generator': generator.state_dict(),
        'discriminator': discriminator.state_dict(),
        'critic': critic.state_dict(),
    }


def _restore(snapshot, generator, discriminator, critic) -> None:
    generator.load_state_dict(snapshot['generator'])
    discriminator.load_state_dict(snapshot['discriminator'])
    critic.load_state_dict(snapshot['critic'])


def discriminator_updates(generator, discriminator, dialogues, schedule: TrainSchedule, rng) -> List[float]:
    """d_steps updates, each on a fresh batch and freshly sampled negatives."""
    losses = []
    for _ in range(schedule.d_steps):
        batch = draw_batch(dialogues, schedule.batch_size, rng)
        sample_seed = _draw_seed(rng)
        positives = [(d.context, d.response) for d in batch]
        negatives = []
        for example, dialogue in enumerate(batch):
            generated = strip_eos(sample_response(generator, dialogue.context_tokens, sample_seed, example, schedule.max_len))
            negatives.append((dialogue.context, tuple(generated or dialogue.response[:1])))
        if schedule.mode == REGS_PARTIAL:
            positives, negatives = mix_partial(positives, negatives, rng)
        losses.append(discriminator_step(discriminator, positives, negatives, lr=schedule.disc_lr))
    return losses


def generator_updates(generator, discriminator, critic, dialogues, schedule: TrainSchedule, rng):
    """g_steps policy updates, each followed by teacher forcing and a critic step."""
    rewards, critic_mse = [], []
    for _ in range(schedule.g_steps):
        batch = draw_batch(dialogues, schedule.batch_size, rng)
        step_seed = _draw_seed(rng)
        if schedule.mode == REINFORCE:
            step = reinforce_step(
                generator, discriminator, critic, batch, step_seed,
                lr=schedule.rl_lr, clip_advantage=schedule.clip_advantage, max_len=schedule.max_len,
            )
        else:
            step = regs_step(
                generator, discriminator, critic, batch, step_seed,
                mode=schedule.mode, rollouts=schedule.rollouts, lr=schedule.rl_lr,
                clip_advantage=schedule.clip_advantage, workers=schedule.workers, max_len=schedule.max_len,
            )
        if not math.isfinite(step.loss):
            raise _NonFinite('generator loss')
        if schedule.teacher_forcing != TF_OFF:
            teacher_forcing_step(generator, discriminator, critic, batch, schedule.teacher_forcing, lr=schedule.rl_lr)
        critic_mse.append(critic_step(critic, step.traces, lr=schedule.critic_lr).mse)
        rewards.append(step.reward_mean)
    return rewards, critic_mse


def save_models(checkpoint_dir, iteration: int, generator, discriminator, critic,
                vocab_hash: str, config_hash: str) -> List[Path]:
    checkpoint_dir = Path(checkpoint_dir)
    checkpoint_dir.mkdir(parents=True, exist_ok=True)
    extra = {'iteration': iteration}
    return [
        save_checkpoint(checkpoint_dir / f"{name}-{iteration:05d}.json", model, vocab_hash, config_hash, extra)
        for name, model in (('generator', generator), ('discriminator', discriminator), ('critic', critic))
    ]


def adversarial_train(
    dialogues: Sequence[Dialogue],
    generator,
    discriminator,
    critic,
    schedule: TrainSchedule,
    config_hash: str = '',
    vocab_hash: str = '',
    heldout: Optional[Sequence[Dialogue]] = None,
    metrics_path=None,
    checkpoint_dir=None,
    start_iteration: int = 0,
) -> TrainResult:
    """
    Run ``schedule.iterations`` adversarial iterations after ``start_iteration``.

    Models are updated in place. Perplexity is measured on ``heldout`` (or
    the first training dialogues) after every iteration.

    Raises:
        Diverged: a loss, reward or perplexity became non-finite; the models
            are restored to, and ``last_good`` holds, the last finite state
    """
    if not dialogues:
        raise ValueError("no dialogues to train on")
    eval_set = list(heldout) if heldout else list(dialogues[:EVAL_DIALOGUES])
    result = TrainResult(generator=generator, discriminator=discriminator, critic=critic)
    metrics_handle = None
    if metrics_path is not None:
        Path(metrics_path).parent.mkdir(parents=True, exist_ok=True)
        metrics_handle = Path(metrics_path).open('a' if start_iteration else 'w', encoding='utf-8', newline='\n')

    try:
        for iteration in range(start_iteration + 1, start_iteration + schedule.iterations + 1):
            started = time.perf_counter()
            rng = iteration_rng(schedule.seed, iteration)
            last_good = _snapshot(generator, discriminator, critic)
            try:
                d_losses = discriminator_updates(generator, discriminator, dialogues, schedule, rng)
                if not all(math.isfinite(loss) for loss in d_losses):
                    raise _NonFinite('discriminator loss')
                rewards, critic_mse = generator_updates(generator, discriminator, critic, dialogues, schedule, rng)
                current = perplexity(generator, eval_set)
                if not math.isfinite(current):
                    raise _NonFinite('perplexity')
            except (_NonFinite, OverflowError) as e:
                _restore(last_good, generator, discriminator, critic)
                logger.error(f"Adversarial training diverged at iteration {iteration}: {e}", exc_info=True)
                raise Diverged(iteration, str(e), last_good=last_good) from e

            metrics = IterationMetrics(
                iteration=iteration,
                d_loss=float(np.mean(d_losses)),
                g_reward_mean=float(np.mean(rewards)),
                critic_mse=float(np.mean(critic_mse)),
                perplexity=current,
                wall_ms=int(round((time.perf_counter() - started) * 1000)),
                seed=schedule.seed,
                config_hash=config_hash,
                d_updates=len(d_losses),
                g_updates=len(rewards),
            )
            result.metrics.append(metrics)
            if metrics_handle is not None:
                metrics_handle.write(json.dumps(metrics.to_record(), sort_keys=True) + '\n')
                metrics_handle.flush()
            logger.debug(
                f"Iteration {iteration}: d_loss={metrics.d_loss:.4f} "
                f"reward={metrics.g_reward_mean:.4f} perplexity={current:.3f}"
            )

            if checkpoint_dir is not None and (
                iteration % schedule.checkpoint_every == 0 or iteration == start_iteration + schedule.iterations
            ):
                result.checkpoints.extend(
                    save_models(checkpoint_dir, iteration, generator, discriminator, critic, vocab_hash, config_hash)
                )
                logger.info(f"Checkpoint written at iteration {iteration}")
    finally:
        if metrics_handle is not None:
            metrics_handle.close()
    return result


@dataclass(frozen=True)
class StabilityRun:
    seed: int
    teacher_forcing: str
    pretrain_perplexity: float
    peak_perplexity: float
    diverged: bool

    @property
    def ratio(self) -> float:
        return self.peak_perplexity / self.pretrain_perplexity

    def to_dict(self) -> dict:
        return {**asdict(self), 'ratio': self.ratio}


def stability_study(
    dialogues: Sequence[Dialogue],
    generator,
    discriminator,
    critic,
    schedule: TrainSchedule,
    seeds: Sequence[int] = (1, 2, 3, 4, 5),
    modes: Sequence[str] = (TF_OFF, CONSTANT_ONE),
    heldout: Optional[Sequence[Dialogue]] = None,
) -> List[StabilityRun]:
    """
    Adversarial training from the same pretrained models with and without
    teacher forcing; reports the peak perplexity relative to pretraining.

    The models passed in are cloned and left untouched. A diverged run
    counts as an unbounded perplexity.
    """
    eval_set = list(heldout) if heldout else list(dialogues[:EVAL_DIALOGUES])
    base = perplexity(generator, eval_set)
    runs = []
    for seed in seeds:
        for mode in modes:
            g, d, c = generator.clone(), discriminator.clone(), critic.clone()
            try:
                trained = adversarial_train(
                    dialogues, g, d, c, replace(schedule, seed=seed, teacher_forcing=mode), heldout=eval_set,
                )
                peak, diverged = max(trained.perplexities, default=base), False
            except Diverged:
                peak, diverged = math.inf, True
            run = StabilityRun(seed, mode, base, peak, diverged)
            logger.info(f"Stability seed={seed} teacher_forcing={mode}: ratio {run.ratio:.2f}")
            runs.append(run)
    return runs
