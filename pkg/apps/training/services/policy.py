"""
Policy-Gradient, Teacher-Forcing, Critic and Discriminator Updates.

Every generator update is one loss of the form

    loss = -(1/N) * sum_i sum_t A_i,t * log p(y_i,t | x_i, y_i,<t)

- MLE:                      A_i,t = tf-idf multiplier m_i
- teacher forcing (const):  A_i,t = 1
- teacher forcing (gated):  A_i,t = Q+ - b when Q+ > b, example skipped otherwise
- REINFORCE:                A_i,t = Q+({x,y}) - b({x,y})
- REGS:                     A_i,t = Q+(x, Y_t) - b(x, Y_t)

so that the reductions between them hold exactly.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from apps.autodiff.services import Tensor, no_grad
from apps.corpus.services import Dialogue
from apps.decoding.services import complete
from apps.seqmodels.services import HUMAN, MACHINE, strip_eos, with_eos
from apps.training.services.optim import SGD, GRAD_CLIP, compute_gradients, global_norm, named
from apps.training.services.rewards import (
    MAX_DECODE_LEN,
    MC_ROLLOUTS,
    REGS_MC,
    REGS_PARTIAL,
    REINFORCE,
    WORKERS,
    RewardTrace,
    mc_rollout_rewards,
    partial_rewards,
    response_prefix,
)

logger = logging.getLogger(__name__)

MLE_LR = getattr(settings, 'LAB_MLE_LR', 0.5)
RL_LR = getattr(settings, 'LAB_RL_LR', 0.01)
CRITIC_LR = getattr(settings, 'LAB_CRITIC_LR', 0.05)
DISC_LR = getattr(settings, 'LAB_DISC_LR', 0.1)

TF_OFF, CONSTANT_ONE, GATED = 'OFF', 'CONSTANT_ONE', 'GATED'
TEACHER_FORCING_MODES = (TF_OFF, CONSTANT_ONE, GATED)

PolicyItem = Tuple[Sequence[int], Sequence[int], np.ndarray]


@dataclass
class StepResult:
    loss: float
    grad_norm: float
    gradients: Dict[str, np.ndarray] = field(default_factory=dict)
    traces: List[RewardTrace] = field(default_factory=list)
    applied: bool = True

    @property
    def reward_mean(self) -> float:
        if not self.traces:
            return float('nan')
        return float(np.mean([trace.rewards[-1] for trace in self.traces]))


@dataclass
class CriticResult:
    mse: float
    grad_norm: float


# ----------------------------------------------------------------------
# Shared generator update
# ----------------------------------------------------------------------
def policy_gradient_loss(generator, items: Sequence[PolicyItem], normalizer: Optional[int] = None) -> Tensor:
    """-(1/N) sum_i sum_t A_i,t log p(y_i,t | ...) for (context, y, A) items."""
    if not items:
        raise ValueError("no items to train on")
    total = None
    for context, y, advantages in items:
        log_probs = generator.log_probs(context, y)
        term = -((log_probs * Tensor(advantages)).sum())
        total = term if total is None else total + term
    return total * (1.0 / (normalizer or len(items)))


def _generator_update(generator, items: Sequence[PolicyItem], lr: float, clip: Optional[float],
                      apply: bool, normalizer: Optional[int] = None) -> StepResult:
    params = generator.parameters()
    loss = policy_gradient_loss(generator, items, normalizer)
    grads = compute_gradients(loss, params)
    norm = global_norm(grads.values())
    if apply and math.isfinite(loss.item()):
        SGD(params, lr, clip).step(grads)
    return StepResult(loss=loss.item(), grad_norm=norm, gradients=named(grads, params), applied=apply)


def _constant(length: int, value: float) -> np.ndarray:
    return np.full(length, float(value))


def mle_step(
    generator,
    batch: Sequence[Dialogue],
    lr: float = MLE_LR,
    multipliers: Optional[Sequence[float]] = None,
    clip: Optional[float] = GRAD_CLIP,
    apply: bool = True,
) -> StepResult:
    """One maximum-likelihood step; ``multipliers`` are the tf-idf rate factors."""
    multipliers = np.ones(len(batch)) if multipliers is None else np.asarray(multipliers, dtype=np.float64)
    items = []
    for dialogue, weight in zip(batch, multipliers):
        y = with_eos(dialogue.response)
        items.append((dialogue.context_tokens, y, _constant(len(y), weight)))
    return _generator_update(generator, items, lr, clip, apply)


# ----------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------
def sample_response(generator, context_tokens: Sequence[int], seed: int, example: int,
                    max_len: int = MAX_DECODE_LEN) -> List[int]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, example]))
    with no_grad():
        return complete(generator, generator.start(context_tokens), [], rng, max_len=max_len)


def _clip_advantages(advantages: np.ndarray, clip_advantage: bool) -> np.ndarray:
    return np.clip(advantages, -1.0, 1.0) if clip_advantage else advantages


# ----------------------------------------------------------------------
# Adversarial generator updates
# ----------------------------------------------------------------------
def reinforce_step(
    generator,
    discriminator,
    critic,
    batch: Sequence[Dialogue],
    seed: int,
    lr: float = RL_LR,
    clip: Optional[float] = GRAD_CLIP,
    clip_advantage: bool = False,
    max_len: int = MAX_DECODE_LEN,
    apply: bool = True,
) -> StepResult:
    """
    Sample y ~ pi(.|x) for each x and ascend (Q+({x,y}) - b({x,y})) * grad log pi(y|x).

    The discriminator and critic are only read.
    """
    items, traces = [], []
    for example, dialogue in enumerate(batch):
        generated = sample_response(generator, dialogue.context_tokens, seed, example, max_len)
        response = strip_eos(generated)
        with no_grad():
            reward = float(discriminator.score(dialogue.context, response))
            baseline = float(critic.predict(dialogue.context, response))
        trace = RewardTrace(
            context=dialogue.context,
            generated=tuple(generated),
            rewards=(reward,) * len(generated),
            baselines=(baseline,) * len(generated),
            mode=REINFORCE,
        )
        traces.append(trace)
        items.append((dialogue.context_tokens, generated, _clip_advantages(trace.advantages, clip_advantage)))
    result = _generator_update(generator, items, lr, clip, apply)
    result.traces = traces
    return result


def regs_step(
    generator,
    discriminator,
    critic,
    batch: Sequence[Dialogue],
    seed: int,
    mode: str = REGS_MC,
    rollouts: int = MC_ROLLOUTS,
    lr: float = RL_LR,
    clip: Optional[float] = GRAD_CLIP,
    clip_advantage: bool = False,
    workers: int = WORKERS,
    max_len: int = MAX_DECODE_LEN,
    apply: bool = True,
) -> StepResult:
    """
    Reward every generation step: ascend sum_t (Q+(x,Y_t) - b(x,Y_t)) grad log p(y_t|x,Y_<t).

    ``mode`` is REGS_MC (Monte-Carlo completions) or REGS_PARTIAL (a
    discriminator trained on prefixes scores each prefix directly).
    """
    mode = {'MC': REGS_MC, 'PARTIAL': REGS_PARTIAL}.get(mode, mode)
    if mode not in (REGS_MC, REGS_PARTIAL):
        raise ValueError(f"regs mode must be MC or PARTIAL, got {mode!r}")

    items, traces = [], []
    for example, dialogue in enumerate(batch):
        generated = sample_response(generator, dialogue.context_tokens, seed, example, max_len)
        if mode == REGS_MC:
            rewards = mc_rollout_rewards(
                generator, discriminator, dialogue.context, generated,
                rollouts=rollouts, seed=seed, example=example, workers=workers, max_len=max_len,
            )
        else:
            rewards = partial_rewards(discriminator, dialogue.context, generated)
        with no_grad():
            baselines = [
                float(critic.predict(dialogue.context, response_prefix(generated, t)))
                for t in range(1, len(generated) + 1)
            ]
        trace = RewardTrace(
            context=dialogue.context,
            generated=tuple(generated),
            rewards=tuple(rewards),
            baselines=tuple(baselines),
            mode=mode,
        )
        traces.append(trace)
        items.append((dialogue.context_tokens, generated, _clip_advantages(trace.advantages, clip_advantage)))
    result = _generator_update(generator, items, lr, clip, apply)
    result.traces = traces
    return result


def teacher_forcing_step(
    generator,
    discriminator,
    critic,
    human_batch: Sequence[Dialogue],
    mode: str = CONSTANT_ONE,
    lr: float = RL_LR,
    clip: Optional[float] = GRAD_CLIP,
    apply: bool = True,
) -> StepResult:
    """
    Update the generator on human responses.

    CONSTANT_ONE uses reward 1 for every example (an MLE step). GATED uses
    weight Q+ - b only for examples where Q+ > b and skips the rest.
    """
    if mode not in TEACHER_FORCING_MODES:
        raise ValueError(f"unknown teacher forcing mode {mode!r}")
    if mode == TF_OFF or not human_batch:
        return StepResult(loss=0.0, grad_norm=0.0, applied=False)

    items = []
    for dialogue in human_batch:
        y = with_eos(dialogue.response)
        weight = 1.0
        if mode == GATED:
            with no_grad():
                reward = float(discriminator.score(dialogue.context, dialogue.response))
                baseline = float(critic.predict(dialogue.context, dialogue.response))
            if not reward > baseline:
                continue
            weight = reward - baseline
        items.append((dialogue.context_tokens, y, _constant(len(y), weight)))

    if not items:
        logger.debug("Teacher forcing gate closed for the whole batch")
        return StepResult(loss=0.0, grad_norm=0.0, applied=False)
    return _generator_update(generator, items, lr, clip, apply, normalizer=len(human_batch))


# ----------------------------------------------------------------------
# Critic and discriminator
# ----------------------------------------------------------------------
def critic_targets(traces: Sequence[RewardTrace]) -> List[Tuple[tuple, List[int], float]]:
    """
    Regression targets: full responses for REINFORCE traces, every prefix
    (the full response included) for REGS traces.
    """
    targets = []
    for trace in traces:
        if trace.mode == REINFORCE:
            targets.append((trace.context, trace.prefix(len(trace.generated)), trace.rewards[-1]))
            continue
        for t in range(1, len(trace.generated) + 1):
            targets.append((trace.context, trace.prefix(t), trace.rewards[t - 1]))
    return targets


def critic_step(critic, traces: Sequence[RewardTrace], lr: float = CRITIC_LR,
                clip: Optional[float] = GRAD_CLIP, apply: bool = True) -> CriticResult:
    """One step on mean (b - r)^2; returns the pre-step MSE."""
    targets = critic_targets(traces)
    if not targets:
        raise ValueError("critic_step needs at least one trace")
    params = critic.parameters()
    total = None
    for context, prefix, reward in targets:
        error = (critic.value(context, prefix) - reward) ** 2
        total = error if total is None else total + error
    loss = total * (1.0 / len(targets))
    grads = compute_gradients(loss, params)
    if apply:
        SGD(params, lr, clip).step(grads)
    return CriticResult(mse=loss.item(), grad_norm=global_norm(grads.values()))


def discriminator_step(
    discriminator,
    positives: Sequence[Tuple[Sequence[Sequence[int]], Sequence[int]]],
    negatives: Sequence[Tuple[Sequence[Sequence[int]], Sequence[int]]],
    lr: float = DISC_LR,
    clip: Optional[float] = GRAD_CLIP,
    apply: bool = True,
) -> float:
    """Mean binary cross-entropy over human (label 1) and machine (label 0) episodes."""
    examples = [(c, r, HUMAN) for c, r in positives] + [(c, r, MACHINE) for c, r in negatives]
    if not examples:
        raise ValueError("discriminator_step needs examples")
    params = discriminator.parameters()
    total = None
    for context, response, label in examples:
        term = discriminator.loss(context, response, label)
        total = term if total is None else total + term
    loss = total * (1.0 / len(examples))
    grads = compute_gradients(loss, params)
    if apply and math.isfinite(loss.item()):
        SGD(params, lr, clip).step(grads)
    return loss.item()
