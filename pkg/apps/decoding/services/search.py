"""
Decoding Strategies.

- greedy_decode: argmax at every step
- sample_decode: ancestral sampling from softmax(logits / temperature)
- beam_search: n-best with the intra-sibling rank penalty and the repeated
  word-type penalty
- anti_lm_decode: beam search scoring log p(y_t|x, .) - w * log p_LM(y_t|.)

PAD and BOS are never emitted; EOS is not allowed as the first token. A
hypothesis that reaches ``max_len`` without EOS is returned truncated.
Every strategy runs without graph recording.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, FrozenSet, List, Optional, Sequence

import numpy as np

from apps.autodiff.services import no_grad
from apps.corpus.services import BOS_ID, EOS_ID, PAD_ID
from apps.decoding.services.config import BEAM, DecodeConfig, MAX_DECODE_LEN

logger = logging.getLogger(__name__)

NEVER_EMITTED = (PAD_ID, BOS_ID)


@dataclass
class BeamHypothesis:
    """
    One (possibly partial) response.

    ``score`` is the cumulative adjusted score (raw score minus sibling and
    repeat penalties); ``log_prob`` is the generator's own cumulative
    log-probability of ``tokens``.
    """
    tokens: tuple
    score: float = 0.0
    log_prob: float = 0.0
    parent: Optional['BeamHypothesis'] = field(default=None, repr=False, compare=False)
    word_types: FrozenSet[int] = frozenset()
    state: Any = field(default=None, repr=False, compare=False)
    lm_state: Any = field(default=None, repr=False, compare=False)

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS_ID

    @property
    def response(self) -> List[int]:
        """Tokens without the closing EOS."""
        return list(self.tokens[:-1] if self.finished else self.tokens)

    def sort_key(self):
        return (-self.score, self.tokens, len(self.tokens))


def masked_log_probs(log_probs: np.ndarray, position: int) -> np.ndarray:
    """Copy of a step distribution with forbidden tokens set to -inf."""
    masked = np.array(log_probs, dtype=np.float64)
    masked[list(NEVER_EMITTED)] = -np.inf
    if position == 0:
        masked[EOS_ID] = -np.inf
    return masked


def ranked_children(scores: np.ndarray) -> List[int]:
    """Allowed token ids by descending score, lower id first on ties."""
    allowed = np.flatnonzero(np.isfinite(scores))
    return sorted(allowed.tolist(), key=lambda k: (-scores[k], k))


def sibling_adjusted(scores: Sequence[float], sibling_penalty: float) -> List[float]:
    """Each child's score minus ``sibling_penalty`` times its 0-based rank."""
    scores = np.asarray(scores, dtype=np.float64)
    adjusted = np.empty_like(scores)
    for rank, k in enumerate(ranked_children(scores)):
        adjusted[k] = scores[k] - sibling_penalty * rank
    return adjusted.tolist()


# ----------------------------------------------------------------------
# Greedy and sampling
# ----------------------------------------------------------------------
def greedy_decode(generator, context: Sequence[int], max_len: int = MAX_DECODE_LEN) -> BeamHypothesis:
    with no_grad():
        state = generator.start(context)
        tokens, total = [], 0.0
        for position in range(max_len):
            scores = masked_log_probs(state.log_probs.data, position)
            token = ranked_children(scores)[0]
            tokens.append(token)
            total += float(scores[token])
            if token == EOS_ID:
                break
            state = generator.step(state, token)
    return BeamHypothesis(tokens=tuple(tokens), score=total, log_prob=total)


def sample_token(log_probs: np.ndarray, position: int, rng: np.random.Generator, temperature: float = 1.0) -> int:
    scores = masked_log_probs(log_probs, position) / temperature
    scores -= scores.max()
    probs = np.exp(scores)
    probs /= probs.sum()
    return int(rng.choice(probs.size, p=probs))


def complete(
    generator,
    state,
    prefix: Sequence[int],
    rng: np.random.Generator,
    temperature: float = 1.0,
    max_len: int = MAX_DECODE_LEN,
) -> List[int]:
    """
    Sample a continuation of ``prefix`` from the decoder ``state`` reached
    after it. Returns the full token list (prefix included).
    """
    tokens = list(prefix)
    if tokens and tokens[-1] == EOS_ID:
        return tokens
    with no_grad():
        while len(tokens) < max_len:
            token = sample_token(state.log_probs.data, len(tokens), rng, temperature)
            tokens.append(token)
            if token == EOS_ID:
                break
            state = generator.step(state, token)
    return tokens


def sample_decode(
    generator,
    context: Sequence[int],
    temperature: float = 1.0,
    seed: int = 0,
    max_len: int = MAX_DECODE_LEN,
) -> BeamHypothesis:
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    rng = np.random.default_rng(seed)
    with no_grad():
        tokens = complete(generator, generator.start(context), [], rng, temperature, max_len)
        log_prob = float(generator.log_probs(context, tokens).data.sum())
    return BeamHypothesis(tokens=tuple(tokens), score=log_prob, log_prob=log_prob)


# ----------------------------------------------------------------------
# Beam search
# ----------------------------------------------------------------------
def beam_search(
    generator,
    context: Sequence[int],
    config: Optional[DecodeConfig] = None,
    *,
    stop_ids: FrozenSet[int],
    lm=None,
    lm_weight: float = 0.0,
) -> List[BeamHypothesis]:
    """
    Ranked n-best list of at most ``config.beam_width`` hypotheses.

    Each parent's children are ranked by their raw score (generator log-prob,
    minus ``lm_weight`` times the LM log-prob when an LM is given); a child
    at sibling rank r loses ``sibling_penalty * r`` and a child repeating a
    non-stop word type already in the hypothesis loses ``repeat_penalty``.
    The top ``beam_width`` children across all parents survive; those ending
    in EOS are finished.
    """
    config = config or DecodeConfig(strategy=BEAM)
    width = config.beam_width
    use_lm = lm is not None and lm_weight > 0

    finished: List[BeamHypothesis] = []
    with no_grad():
        root = BeamHypothesis(
            tokens=(),
            state=generator.start(context),
            lm_state=lm.start() if use_lm else None,
        )
        live = [root]
        for position in range(config.max_len):
            candidates = []
            for parent in live:
                log_probs = masked_log_probs(parent.state.log_probs.data, position)
                scores = log_probs
                if use_lm:
                    scores = log_probs - lm_weight * parent.lm_state.log_probs.data
                for rank, token in enumerate(ranked_children(scores)):
                    repeated = token in parent.word_types
                    adjusted = (
                        parent.score + float(scores[token])
                        - config.sibling_penalty * rank
                        - (config.repeat_penalty if repeated else 0.0)
                    )
                    word_types = parent.word_types
                    if token != EOS_ID and token not in stop_ids:
                        word_types = word_types | {token}
                    candidates.append(BeamHypothesis(
                        tokens=parent.tokens + (token,),
                        score=adjusted,
                        log_prob=parent.log_prob + float(log_probs[token]),
                        parent=parent,
                        word_types=word_types,
                    ))
            candidates.sort(key=BeamHypothesis.sort_key)

            live = []
            for candidate in candidates[:width]:
                if candidate.finished:
                    finished.append(candidate)
                    continue
                live.append(candidate)
                if position + 1 == config.max_len:
                    continue
                parent = candidate.parent
                token = candidate.tokens[-1]
                candidate.state = generator.step(parent.state, token)
                if use_lm:
                    candidate.lm_state = lm.step(parent.lm_state, token)
            if not live or len(finished) >= width:
                break
        else:
            # max_len reached: keep the unfinished hypotheses truncated
            finished.extend(live)

    for hypothesis in finished:
        hypothesis.state = hypothesis.lm_state = None
    finished.sort(key=BeamHypothesis.sort_key)
    return finished[:width]


def anti_lm_decode(
    generator,
    lm,
    context: Sequence[int],
    weight: float,
    config: Optional[DecodeConfig] = None,
    *,
    stop_ids: FrozenSet[int],
) -> BeamHypothesis:
    """Best hypothesis of beam search with the LM log-prob penalised by ``weight``."""
    if weight < 0:
        raise ValueError(f"weight must be >= 0, got {weight}")
    return beam_search(generator, context, config, stop_ids=stop_ids, lm=lm, lm_weight=weight)[0]
