"""
Data-Processing Tricks.

- Minimum response length filter (responses shorter than the threshold are
  dropped before training).
- tf-idf weighted learning rates: every response is a document, stop words
  are removed, per-example rates are normalised within the batch and each
  score is capped at L times the batch minimum.
"""

import logging
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence

import numpy as np
from django.conf import settings

from apps.corpus.services.loader import Dialogue

logger = logging.getLogger(__name__)

MIN_RESPONSE_LEN = getattr(settings, 'LAB_MIN_RESPONSE_LEN', 5)
TFIDF_CAP = getattr(settings, 'LAB_TFIDF_CAP', 3.0)


def filter_min_length(dialogues: Iterable[Dialogue], threshold: int = MIN_RESPONSE_LEN) -> List[Dialogue]:
    """Keep dialogues whose response has at least ``threshold`` tokens."""
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    return [d for d in dialogues if len(d.response) >= threshold]


@dataclass(frozen=True)
class IdfTable:
    """Inverse document frequencies with add-one smoothing, ln-scaled."""
    idf: Dict[int, float]
    documents: int
    stop_ids: FrozenSet[int]

    @classmethod
    def fit(cls, responses: Iterable[Sequence[int]], stop_ids: FrozenSet[int] = frozenset()) -> 'IdfTable':
        frequencies = Counter()
        documents = 0
        for response in responses:
            documents += 1
            frequencies.update(set(response))
        idf = {
            token: math.log((1.0 + documents) / (1.0 + count)) + 1.0
            for token, count in frequencies.items()
        }
        return cls(idf=idf, documents=documents, stop_ids=frozenset(stop_ids))

    def weight(self, token_id: int) -> float:
        # unseen tokens get the rarest possible weight
        return self.idf.get(token_id, math.log(1.0 + self.documents) + 1.0)

    def score(self, response: Sequence[int]) -> Optional[float]:
        """
        Average tf-idf of the non-stop tokens of one response.

        Returns None when every token is a stop word.
        """
        content = [token for token in response if token not in self.stop_ids]
        if not content:
            return None
        counts = Counter(content)
        return sum((count / len(content)) * self.weight(token) for token, count in counts.items())


@dataclass(frozen=True)
class LearningRateSchedule:
    """Per-example learning-rate multipliers for one batch (mean 1)."""
    base_lr: float
    cap_factor: float
    multipliers: np.ndarray

    @property
    def rates(self) -> np.ndarray:
        return self.base_lr * self.multipliers


def weighted_rates(
    scores: Sequence[Optional[float]],
    base_lr: float,
    cap: float = TFIDF_CAP,
) -> LearningRateSchedule:
    """
    rate_i = N * lr * t_i / sum(t) after capping each t_i at cap * min(t).

    Scores given as None (all-stop-word responses) take the batch minimum of
    the defined scores before capping.
    """
    if not scores:
        raise ValueError("batch must be non-empty")
    if not base_lr > 0:
        raise ValueError(f"base_lr must be > 0, got {base_lr}")
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")

    defined = [s for s in scores if s is not None]
    if not defined:
        multipliers = np.ones(len(scores))
        return LearningRateSchedule(base_lr=base_lr, cap_factor=cap, multipliers=multipliers)

    floor = min(defined)
    raw = np.array([floor if s is None else s for s in scores], dtype=np.float64)
    capped = np.minimum(raw, cap * raw.min())
    multipliers = len(capped) * capped / capped.sum()
    return LearningRateSchedule(base_lr=base_lr, cap_factor=cap, multipliers=multipliers)


def tfidf_weighted_rates(
    batch: Sequence[Sequence[int]],
    base_lr: float,
    cap: float = TFIDF_CAP,
    idf: Optional[IdfTable] = None,
    *,
    stop_ids: FrozenSet[int],
) -> LearningRateSchedule:
    """
    tf-idf weighted learning rates for a batch of responses.

    Args:
        batch: response token-id lists
        base_lr: original learning rate
        cap: L, the cap relative to the batch-minimum score
        idf: document frequencies; defaults to the batch itself
        stop_ids: stop-word ids left out of every score; must match ``idf``
    """
    if not batch:
        raise ValueError("batch must be non-empty")
    stop_ids = frozenset(stop_ids)
    if idf is not None and idf.stop_ids != stop_ids:
        raise ValueError("idf table was fitted with other stop words")
    table = idf or IdfTable.fit(batch, stop_ids)
    return weighted_rates([table.score(response) for response in batch], base_lr, cap)
