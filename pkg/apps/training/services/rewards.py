"""
Rewards for Generated Responses.

- REINFORCE: one reward Q+({x, y}) shared by every token
- REGS_MC: reward for prefix y_1..t is the mean Q+ of N sampled completions
- REGS_PARTIAL: reward for prefix y_1..t is Q+ of the prefix itself, scored
  by a discriminator trained on partial sequences

Rollouts draw from their own generator seeded by (seed, example, t, n), so
the rewards do not depend on how many worker threads run them.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from django.conf import settings

from apps.autodiff.services import no_grad
from apps.decoding.services import complete
from apps.seqmodels.services import strip_eos

logger = logging.getLogger(__name__)

MC_ROLLOUTS = getattr(settings, 'LAB_MC_ROLLOUTS', 5)
WORKERS = getattr(settings, 'LAB_WORKERS', 1)
MAX_DECODE_LEN = getattr(settings, 'LAB_MAX_DECODE_LEN', 20)

REINFORCE, REGS_MC, REGS_PARTIAL = 'REINFORCE', 'REGS_MC', 'REGS_PARTIAL'
MODES = (REINFORCE, REGS_MC, REGS_PARTIAL)


@dataclass(frozen=True)
class RewardTrace:
    """
    Per-token rewards and baselines for one generated response.

    ``generated`` is the sampled token list (EOS included when produced);
    ``rewards[t]`` and ``baselines[t]`` belong to the prefix of length t+1.
    """
    context: Tuple[Tuple[int, ...], ...]
    generated: Tuple[int, ...]
    rewards: Tuple[float, ...]
    baselines: Tuple[float, ...]
    mode: str

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not (len(self.rewards) == len(self.baselines) == len(self.generated)):
            raise ValueError("rewards and baselines need one entry per generated token")

    @property
    def context_tokens(self) -> List[int]:
        return [token for utterance in self.context for token in utterance]

    @property
    def advantages(self) -> np.ndarray:
        return np.asarray(self.rewards) - np.asarray(self.baselines)

    def prefix(self, length: int) -> List[int]:
        return response_prefix(self.generated, length)


def response_prefix(generated: Sequence[int], length: int) -> List[int]:
    """The first ``length`` tokens as a response (closing EOS removed)."""
    return strip_eos(list(generated)[:length])


def rollout_seed(seed: int, example: int, step: int, rollout: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, example, step, rollout]))


def mc_rollout_rewards(
    generator,
    discriminator,
    context: Sequence[Sequence[int]],
    generated: Sequence[int],
    rollouts: int = MC_ROLLOUTS,
    seed: int = 0,
    example: int = 0,
    workers: int = WORKERS,
    max_len: int = MAX_DECODE_LEN,
) -> List[float]:
    """
    Monte-Carlo reward for every prefix of ``generated``.

    For t < |y| the prefix is completed ``rollouts`` times by temperature-1
    sampling and the completions' Q+ scores are averaged; for t = |y| the
    generated sequence itself is scored.
    """
    if rollouts < 1:
        raise ValueError(f"rollouts must be >= 1, got {rollouts}")
    generated = [int(t) for t in generated]
    context_tokens = [token for utterance in context for token in utterance]

    with no_grad():
        states = [generator.start(context_tokens)]
        for token in generated[:-1]:
            states.append(generator.step(states[-1], token))

    def run(job):
        step, rollout = job
        with no_grad():
            tokens = complete(
                generator,
                states[step],
                generated[:step],
                rollout_seed(seed, example, step, rollout),
                max_len=max(max_len, step + 1),
            )
            return discriminator.score(context, strip_eos(tokens))

    jobs = [(step, n) for step in range(1, len(generated)) for n in range(rollouts)]
    if workers > 1 and jobs:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scores = list(pool.map(run, jobs))
    else:
        scores = [run(job) for job in jobs]

    rewards = [float(np.mean(scores[i * rollouts:(i + 1) * rollouts])) for i in range(len(generated) - 1)]
    with no_grad():
        rewards.append(float(discriminator.score(context, strip_eos(generated))))
    return rewards


def partial_rewards(discriminator, context: Sequence[Sequence[int]], generated: Sequence[int]) -> List[float]:
    """Q+ of every prefix, scored directly by a partial-sequence discriminator."""
    with no_grad():
        return [
            float(discriminator.score(context, response_prefix(generated, t)))
            for t in range(1, len(generated) + 1)
        ]


def partial_disc_pairs(y_plus: Sequence[int], y_minus: Sequence[int], seed) -> Tuple[List[int], List[int]]:
    """
    One uniformly chosen prefix of each sequence.

    ``seed`` is an int or a numpy Generator.
    """
    if not len(y_plus) or not len(y_minus):
        raise ValueError("both sequences must be non-empty")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    plus = int(rng.integers(1, len(y_plus) + 1))
    minus = int(rng.integers(1, len(y_minus) + 1))
    return list(y_plus[:plus]), list(y_minus[:minus])
