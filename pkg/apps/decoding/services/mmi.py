"""
Mutual-Information Reranking.

Rescores an n-best list with the backward model p(x|y):

    score = (1 - lambda) * log p(y|x) / |y| + lambda * log p(x|y) / (|x| + 1)

Both terms are per-token normalised (the backward target is the context
followed by EOS). With lambda = 0 the input order is kept unchanged.
"""

import logging
from dataclasses import dataclass
from typing import List, Sequence

from apps.autodiff.services import no_grad
from apps.decoding.services.config import MMI_WEIGHT
from apps.decoding.services.search import BeamHypothesis
from apps.seqmodels.services import with_eos

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RerankedHypothesis:
    hypothesis: BeamHypothesis
    forward: float
    backward: float
    score: float

    @property
    def tokens(self) -> tuple:
        return self.hypothesis.tokens


def backward_score(backward_generator, context: Sequence[int], response: Sequence[int]) -> float:
    """Per-token log p(x|y) for a response given without EOS."""
    target = with_eos(context)
    with no_grad():
        total = backward_generator.log_probs(list(response), target).data.sum()
    return float(total) / len(target)


def mmi_backward_rerank(
    nbest: Sequence[BeamHypothesis],
    backward_generator,
    context: Sequence[int],
    weight: float = MMI_WEIGHT,
) -> List[RerankedHypothesis]:
    """
    Stable descending sort of ``nbest`` by the interpolated score.

    Raises:
        ValueError: empty n-best list or weight outside [0, 1]
    """
    if not nbest:
        raise ValueError("n-best list must be non-empty")
    if not 0.0 <= weight <= 1.0:
        raise ValueError(f"weight must lie in [0, 1], got {weight}")

    rescored = []
    for hypothesis in nbest:
        forward = hypothesis.log_prob / max(len(hypothesis.tokens), 1)
        backward = backward_score(backward_generator, context, hypothesis.response)
        score = (1.0 - weight) * forward + weight * backward
        rescored.append(RerankedHypothesis(hypothesis, forward, backward, score))

    if weight == 0.0:
        return rescored
    order = sorted(range(len(rescored)), key=lambda i: (-rescored[i].score, i))
    return [rescored[i] for i in order]
