"""
Pretraining.

- Forward generator p(y|x) by maximum likelihood with the min-length filter,
  tf-idf weighted rates, gradient clipping and rate halving whenever the
  held-out perplexity stops improving.
- Backward generator p(x|y) on the reversed pairs, and the unconditional
  language model on responses (used by MMI reranking and anti-LM decoding).
- Discriminator on human positives against machine negatives, half from
  beam search with MMI reranking and half from sampling, trained until its
  held-out accuracy stops improving or the epoch budget runs out.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from apps.autodiff.services import no_grad
from apps.corpus.services import (
    Dialogue,
    IdfTable,
    Vocab,
    filter_min_length,
    tfidf_weighted_rates,
)
from apps.corpus.services.tricks import MIN_RESPONSE_LEN, TFIDF_CAP
from apps.decoding.services import MMI_BACKWARD, SAMPLE, DecodeConfig, decode_one
from apps.seqmodels.services import (
    DiscriminatorModel,
    GeneratorModel,
    LanguageModel,
    ModelDims,
    with_eos,
)
from apps.training.exceptions import Diverged
from apps.training.services.optim import SGD, GRAD_CLIP, compute_gradients
from apps.training.services.policy import DISC_LR, MLE_LR, discriminator_step, mle_step
from apps.training.services.rewards import partial_disc_pairs

logger = logging.getLogger(__name__)

BATCH_SIZE = getattr(settings, 'LAB_BATCH_SIZE', 16)
PRETRAIN_EPOCHS = getattr(settings, 'LAB_PRETRAIN_EPOCHS', 5)
DISC_EPOCHS = getattr(settings, 'LAB_DISC_EPOCHS', 3)
DISC_CONVERGENCE_TOL = getattr(settings, 'LAB_DISC_CONVERGENCE_TOL', 1e-3)

BEAM_MMI, SAMPLED = 'beam_mmi', 'sample'

Episode = Tuple[Tuple[Tuple[int, ...], ...], Tuple[int, ...]]


@dataclass
class PretrainResult:
    model: object
    perplexities: List[float] = field(default_factory=list)
    learning_rates: List[float] = field(default_factory=list)
    steps: int = 0

    @property
    def initial_perplexity(self) -> float:
        return self.perplexities[0]

    @property
    def final_perplexity(self) -> float:
        return self.perplexities[-1]


@dataclass(frozen=True)
class NegativeExample:
    context: Tuple[Tuple[int, ...], ...]
    response: Tuple[int, ...]
    source: str


@dataclass
class DiscriminatorResult:
    model: DiscriminatorModel
    losses: List[float] = field(default_factory=list)
    heldout_accuracy: float = float('nan')
    heldout_accuracies: List[float] = field(default_factory=list)
    negatives: List[NegativeExample] = field(default_factory=list)


def minibatches(items: Sequence, batch_size: int, rng: np.random.Generator) -> List[list]:
    order = rng.permutation(len(items))
    return [[items[i] for i in order[start:start + batch_size]] for start in range(0, len(items), batch_size)]


def perplexity(generator, dialogues: Sequence[Dialogue]) -> float:
    """exp of the mean per-token negative log-likelihood, EOS counted."""
    total, tokens = 0.0, 0
    with no_grad():
        for dialogue in dialogues:
            y = with_eos(dialogue.response)
            total -= float(generator.log_probs(dialogue.context_tokens, y).data.sum())
            tokens += len(y)
    if not tokens:
        raise ValueError("perplexity needs at least one dialogue")
    return math.exp(total / tokens)


def reversed_pairs(dialogues: Sequence[Dialogue]) -> List[Dialogue]:
    """(response -> context) pairs for the backward model p(x|y)."""
    return [
        Dialogue(context=(d.response,), response=tuple(d.context_tokens), split=d.split)
        for d in dialogues
        if d.context_tokens
    ]


def pretrain_generator(
    dialogues: Sequence[Dialogue],
    vocab: Vocab,
    dims: ModelDims,
    seed: int = 0,
    epochs: int = PRETRAIN_EPOCHS,
    batch_size: int = BATCH_SIZE,
    lr: float = MLE_LR,
    min_length: int = MIN_RESPONSE_LEN,
    tfidf_cap: Optional[float] = TFIDF_CAP,
    heldout: Optional[Sequence[Dialogue]] = None,
    backward: bool = False,
    prefix: Optional[str] = None,
) -> PretrainResult:
    """
    Train a generator by maximum likelihood.

    Args:
        dialogues: training dialogues
        heldout: perplexity is measured here; defaults to the training set
        tfidf_cap: None trains with a uniform rate
        backward: train p(x|y) on reversed pairs under the 'backward' prefix
        prefix: parameter namespace overriding the default one

    Raises:
        Diverged: non-finite training loss; ``last_good`` holds the state
            before the failing step
    """
    train = filter_min_length(dialogues, min_length)
    heldout = list(heldout) if heldout else list(train)
    if backward:
        train, heldout = reversed_pairs(train), reversed_pairs(heldout)
    if not train:
        raise ValueError("no training dialogues left after the min-length filter")

    model = GeneratorModel(dims, seed=seed, prefix=prefix or ('backward' if backward else None))
    rng = np.random.default_rng(seed)
    idf = IdfTable.fit((d.response for d in train), vocab.stop_ids) if tfidf_cap else None

    result = PretrainResult(model=model, perplexities=[perplexity(model, heldout)])
    for epoch in range(1, epochs + 1):
        result.learning_rates.append(lr)
        for batch in minibatches(train, batch_size, rng):
            multipliers = None
            if idf is not None:
                multipliers = tfidf_weighted_rates(
                    [d.response for d in batch], lr, tfidf_cap, idf, stop_ids=vocab.stop_ids,
                ).multipliers
            last_good = model.state_dict()
            step = mle_step(model, batch, lr=lr, multipliers=multipliers)
            result.steps += 1
            if not math.isfinite(step.loss):
                model.load_state_dict(last_good)
                raise Diverged(result.steps, 'loss', last_good=last_good)

        current = perplexity(model, heldout)
        if current >= result.perplexities[-1]:
            lr /= 2.0
            logger.info(f"Held-out perplexity did not improve; learning rate halved to {lr}")
        result.perplexities.append(current)
        logger.info(f"Generator ({model.prefix}) epoch {epoch}/{epochs}: held-out perplexity {current:.4f}")
    return result


def pretrain_language_model(
    dialogues: Sequence[Dialogue],
    dims: ModelDims,
    seed: int = 0,
    epochs: int = PRETRAIN_EPOCHS,
    batch_size: int = BATCH_SIZE,
    lr: float = MLE_LR,
    clip: Optional[float] = GRAD_CLIP,
) -> PretrainResult:
    """Unconditional LM on responses (EOS included)."""
    model = LanguageModel(dims, seed=seed)
    rng = np.random.default_rng(seed)
    responses = [with_eos(d.response) for d in dialogues]
    if not responses:
        raise ValueError("no responses to train on")

    def lm_perplexity():
        with no_grad():
            total = sum(-float(model.log_probs(y).data.sum()) for y in responses)
        return math.exp(total / sum(len(y) for y in responses))

    result = PretrainResult(model=model, perplexities=[lm_perplexity()])
    params = model.parameters()
    for _ in range(epochs):
        result.learning_rates.append(lr)
        for batch in minibatches(responses, batch_size, rng):
            loss = None
            for y in batch:
                term = -(model.log_probs(y).sum())
                loss = term if loss is None else loss + term
            loss = loss * (1.0 / len(batch))
            result.steps += 1
            if not math.isfinite(loss.item()):
                raise Diverged(result.steps, 'loss', last_good=model.state_dict())
            SGD(params, lr, clip).step(compute_gradients(loss, params))
        result.perplexities.append(lm_perplexity())
    logger.info(f"Language model trained: perplexity {result.final_perplexity:.4f}")
    return result


# ----------------------------------------------------------------------
# Discriminator
# ----------------------------------------------------------------------
def build_negatives(
    generator,
    dialogues: Sequence[Dialogue],
    backward_generator=None,
    config: Optional[DecodeConfig] = None,
    seed: int = 0,
    *,
    stop_ids: FrozenSet[int],
) -> List[NegativeExample]:
    """
    One machine response per dialogue: even positions from beam search with
    MMI reranking, odd positions sampled, so ceil(n/2) and floor(n/2).
    ``stop_ids`` are the vocabulary's stop words, exempt from the beam
    repeat penalty.
    """
    config = config or DecodeConfig()
    beam_config = replace(config, strategy=MMI_BACKWARD)
    sample_config = replace(config, strategy=SAMPLE, temperature=1.0)
    if backward_generator is None:
        logger.warning("No backward generator: beam negatives are ranked by the forward score only, not MMI-reranked")
        beam_config = replace(beam_config, mmi_weight=0.0)
        backward_generator = generator

    negatives = []
    for index, dialogue in enumerate(dialogues):
        use_beam = index % 2 == 0
        decoded = decode_one(
            generator,
            dialogue.context_tokens,
            beam_config if use_beam else sample_config,
            seed=seed + index,
            stop_ids=stop_ids,
            backward_generator=backward_generator,
        )
        response = decoded.response or (dialogue.response[0],)
        negatives.append(NegativeExample(dialogue.context, tuple(response), BEAM_MMI if use_beam else SAMPLED))
    return negatives


def mix_partial(
    positives: Sequence[Episode],
    negatives: Sequence[Episode],
    rng: np.random.Generator,
) -> Tuple[List[Episode], List[Episode]]:
    """
    Replace every other (positive, negative) pair by one random prefix of
    each, so full sequences and prefixes are mixed 50/50.
    """
    mixed_pos, mixed_neg = [], []
    for index, ((pos_ctx, pos), (neg_ctx, neg)) in enumerate(zip(positives, negatives)):
        if index % 2 == 1:
            pos, neg = partial_disc_pairs(pos, neg, rng)
        mixed_pos.append((pos_ctx, tuple(pos)))
        mixed_neg.append((neg_ctx, tuple(neg)))
    return mixed_pos, mixed_neg


def discriminator_accuracy(discriminator, positives: Sequence[Episode], negatives: Sequence[Episode]) -> float:
    """Balanced accuracy of thresholding Q+ at 0.5."""
    with no_grad():
        hits_pos = [discriminator.score(c, r) > 0.5 for c, r in positives]
        hits_neg = [discriminator.score(c, r) <= 0.5 for c, r in negatives]
    return 0.5 * (float(np.mean(hits_pos)) + float(np.mean(hits_neg)))


def pretrain_discriminator(
    dialogues: Sequence[Dialogue],
    generator,
    dims: ModelDims,
    backward_generator=None,
    seed: int = 0,
    epochs: int = DISC_EPOCHS,
    batch_size: int = BATCH_SIZE,
    lr: float = DISC_LR,
    config: Optional[DecodeConfig] = None,
    heldout: Optional[Sequence[Dialogue]] = None,
    partial: bool = False,
    convergence_tol: float = DISC_CONVERGENCE_TOL,
    *,
    stop_ids: FrozenSet[int],
) -> DiscriminatorResult:
    """
    Train Q+ on human (label 1) against generated (label 0) responses.

    ``epochs`` is the budget. With ``heldout`` dialogues, training stops once
    held-out accuracy fails to improve on its best value by more than
    ``convergence_tol``, and the best epoch's parameters are kept.
    ``partial`` trains on a 50/50 mix of full sequences and random prefixes,
    as REGS_PARTIAL needs.
    """
    if not dialogues:
        raise ValueError("no dialogues to train the discriminator on")
    discriminator = DiscriminatorModel(dims, seed=seed)
    negatives = build_negatives(generator, dialogues, backward_generator, config, seed, stop_ids=stop_ids)
    pairs = [((d.context, d.response), (n.context, n.response)) for d, n in zip(dialogues, negatives)]
    rng = np.random.default_rng(seed)

    held_positives = held_negatives = None
    if heldout:
        held_positives = [(d.context, d.response) for d in heldout]
        held_negatives = [
            (n.context, n.response)
            for n in build_negatives(generator, heldout, backward_generator, config, seed + len(dialogues),
                                     stop_ids=stop_ids)
        ]

    result = DiscriminatorResult(model=discriminator, negatives=negatives)
    best_state = None
    for epoch in range(1, epochs + 1):
        for batch in minibatches(pairs, batch_size, rng):
            positives, machine = [p for p, _ in batch], [n for _, n in batch]
            if partial:
                positives, machine = mix_partial(positives, machine, rng)
            loss = discriminator_step(discriminator, positives, machine, lr=lr)
            if not math.isfinite(loss):
                raise Diverged(len(result.losses) + 1, 'discriminator loss', last_good=discriminator.state_dict())
            result.losses.append(loss)
        logger.info(f"Discriminator epoch {epoch}/{epochs}: last loss {result.losses[-1]:.4f}")

        if held_positives is None:
            continue
        accuracy = discriminator_accuracy(discriminator, held_positives, held_negatives)
        result.heldout_accuracies.append(accuracy)
        logger.info(f"Discriminator epoch {epoch}/{epochs}: held-out accuracy {accuracy:.3f}")
        improved = best_state is None or accuracy > result.heldout_accuracy + convergence_tol
        if best_state is None or accuracy > result.heldout_accuracy:
            best_state, result.heldout_accuracy = discriminator.state_dict(), accuracy
        if not improved:
            logger.info(f"Held-out accuracy converged after {epoch} epochs")
            break

    if best_state is not None:
        discriminator.load_state_dict(best_state)
        logger.info(f"Discriminator held-out accuracy {result.heldout_accuracy:.3f}")
    return result
