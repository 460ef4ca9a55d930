"""
Evaluator Reliability Scenarios.

| scenario            | positives          | negatives                                | gold AdverSuc |
|---------------------|--------------------|------------------------------------------|---------------|
| HUMAN_VS_HUMAN      | human episodes     | disjoint human episodes                  | 0.5           |
| MACHINE_VS_MACHINE  | machine episodes   | disjoint machine episodes                | 0.5           |
| HUMAN_VS_RANDOM     | human episodes     | same context, another human response     | 0             |
| HUMAN_VS_NEXT       | human episodes     | same context, the following utterance    | 0             |

Every scenario is trained on a 70/30 split with a fresh evaluator.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.conf import settings

from apps.corpus.services import Dialogue
from apps.evaluation.exceptions import (
    DegenerateTrainingSet,
    EvaluationError,
    MissingMachineOutputs,
    NoSuccessorAvailable,
)
from apps.evaluation.services.evaluators import Episode
from apps.evaluation.services.metrics import adver_suc, balanced_accuracy, ere_from_measurements

logger = logging.getLogger(__name__)

TRAIN_FRACTION = getattr(settings, 'LAB_EVAL_TRAIN_FRACTION', 0.7)

HUMAN_VS_HUMAN, MACHINE_VS_MACHINE, HUMAN_VS_RANDOM, HUMAN_VS_NEXT = (
    'HUMAN_VS_HUMAN', 'MACHINE_VS_MACHINE', 'HUMAN_VS_RANDOM', 'HUMAN_VS_NEXT',
)
SCENARIOS = (HUMAN_VS_HUMAN, MACHINE_VS_MACHINE, HUMAN_VS_RANDOM, HUMAN_VS_NEXT)
GOLD_ADVER_SUC = {
    HUMAN_VS_HUMAN: 0.5,
    MACHINE_VS_MACHINE: 0.5,
    HUMAN_VS_RANDOM: 0.0,
    HUMAN_VS_NEXT: 0.0,
}

EvaluatorFactory = Callable[[Sequence[Episode], Sequence[Episode], int], object]


def scenario_from_flag(value: str) -> str:
    """'human-vs-random' -> HUMAN_VS_RANDOM."""
    kind = value.strip().upper().replace('-', '_')
    if kind not in SCENARIOS:
        raise EvaluationError(f"unknown scenario {value!r}")
    return kind


def human_episodes(dialogues: Sequence[Dialogue]) -> List[Episode]:
    return [(d.context, d.response) for d in dialogues]


def _unique(episodes: Sequence[Episode]) -> List[Episode]:
    return list(dict.fromkeys((tuple(map(tuple, c)), tuple(r)) for c, r in episodes))


def _disjoint_halves(episodes: Sequence[Episode], rng: np.random.Generator) -> Tuple[List[Episode], List[Episode]]:
    pool = _unique(episodes)
    order = rng.permutation(len(pool))
    half = len(pool) // 2
    return [pool[i] for i in order[:half]], [pool[i] for i in order[half:]]


def random_negatives(episodes: Sequence[Episode], pool: Sequence[Tuple[int, ...]],
                     rng: np.random.Generator) -> List[Episode]:
    """Each context paired with a uniformly drawn human response other than its own."""
    pool = list(dict.fromkeys(tuple(r) for r in pool))
    negatives = []
    for context, response in episodes:
        candidates = [r for r in pool if r != tuple(response)]
        if not candidates:
            raise EvaluationError("random pairing needs at least two distinct responses")
        negatives.append((context, candidates[int(rng.integers(len(candidates)))]))
    return negatives


def build_scenario(
    kind: str,
    dialogues: Sequence[Dialogue],
    machine_outputs: Optional[Sequence[Episode]] = None,
    seed: int = 0,
) -> Tuple[List[Episode], List[Episode]]:
    """
    (positives, negatives) for one scenario, label-balanced to within one.

    Raises:
        NoSuccessorAvailable: HUMAN_VS_NEXT on dialogues without successors
        MissingMachineOutputs: MACHINE_VS_MACHINE without machine outputs
    """
    rng = np.random.default_rng(seed)
    if kind == HUMAN_VS_HUMAN:
        return _disjoint_halves(human_episodes(dialogues), rng)
    if kind == MACHINE_VS_MACHINE:
        if not machine_outputs:
            raise MissingMachineOutputs(kind)
        return _disjoint_halves(machine_outputs, rng)
    if kind == HUMAN_VS_RANDOM:
        positives = human_episodes(dialogues)
        return positives, random_negatives(positives, [d.response for d in dialogues], rng)
    if kind == HUMAN_VS_NEXT:
        linked = [d for d in dialogues if d.successor]
        if not linked:
            raise NoSuccessorAvailable()
        return human_episodes(linked), [(d.context, d.successor) for d in linked]
    raise EvaluationError(f"unknown scenario {kind!r}")


@dataclass
class ScenarioSplit:
    train_positives: List[Episode]
    train_negatives: List[Episode]
    test_positives: List[Episode]
    test_negatives: List[Episode]


def split_episodes(positives: Sequence[Episode], negatives: Sequence[Episode], seed: int,
                   train_fraction: float = TRAIN_FRACTION) -> ScenarioSplit:
    """Per-class shuffle and split; both classes keep at least one test episode."""
    if len(positives) < 2 or len(negatives) < 2:
        raise DegenerateTrainingSet(len(positives), len(negatives))
    rng = np.random.default_rng(seed)

    def split(items):
        order = rng.permutation(len(items))
        cut = min(max(1, int(round(len(items) * train_fraction))), len(items) - 1)
        return [items[i] for i in order[:cut]], [items[i] for i in order[cut:]]

    train_pos, test_pos = split(list(positives))
    train_neg, test_neg = split(list(negatives))
    return ScenarioSplit(train_pos, train_neg, test_pos, test_neg)


def scenario_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


@dataclass
class EreResult:
    adver_suc: Dict[str, float]
    deviations: Dict[str, float]
    ere: float
    seed: int = 0
    evaluator_kind: str = ''


def measure_scenario(factory: EvaluatorFactory, kind: str, dialogues, machine_outputs, seed: int) -> float:
    """Train a fresh evaluator on one scenario and return its held-out AdverSuc."""
    positives, negatives = build_scenario(kind, dialogues, machine_outputs, seed)
    split = split_episodes(positives, negatives, seed)
    evaluator = factory(split.train_positives, split.train_negatives, seed)
    value = adver_suc(evaluator, split.test_positives, split.test_negatives)
    logger.debug(f"{kind}: AdverSuc {value:.3f} (gold {GOLD_ADVER_SUC[kind]})")
    return value


def ere(
    factory: EvaluatorFactory,
    dialogues: Sequence[Dialogue],
    machine_outputs: Optional[Sequence[Episode]],
    seed: int = 0,
    scenarios: Sequence[str] = SCENARIOS,
) -> EreResult:
    """Evaluator reliability error over ``scenarios`` (all four by default)."""
    measured = {
        kind: measure_scenario(factory, kind, dialogues, machine_outputs, scenario_seed(seed, SCENARIOS.index(kind)))
        for kind in scenarios
    }
    value, deviations = ere_from_measurements(measured, GOLD_ADVER_SUC)
    result = EreResult(measured, deviations, value, seed, getattr(factory, 'kind', ''))
    logger.info(f"ERE {value:.4f} over {len(measured)} scenarios ({result.evaluator_kind or 'evaluator'})")
    return result


def machine_vs_random(
    factory: EvaluatorFactory,
    machine_outputs: Sequence[Episode],
    dialogues: Sequence[Dialogue],
    seed: int = 0,
) -> float:
    """
    Held-out accuracy at separating machine outputs (one class) from the same
    contexts paired with randomly drawn human responses (the other class).
    """
    if not machine_outputs:
        raise MissingMachineOutputs('machine_vs_random')
    rng = np.random.default_rng(seed)
    pool = [tuple(d.response) for d in dialogues]
    randoms = []
    for context, _ in machine_outputs:
        randoms.append((context, pool[int(rng.integers(len(pool)))]))
    split = split_episodes(list(machine_outputs), randoms, seed)
    evaluator = factory(split.train_positives, split.train_negatives, seed)
    return balanced_accuracy(evaluator, split.test_positives, split.test_negatives)


def adversarial_success(
    factory: EvaluatorFactory,
    dialogues: Sequence[Dialogue],
    machine_outputs: Sequence[Episode],
    seed: int = 0,
) -> float:
    """AdverSuc of machine outputs against the human responses of the same dialogues."""
    if not machine_outputs:
        raise MissingMachineOutputs('adversarial_success')
    split = split_episodes(human_episodes(dialogues), list(machine_outputs), seed)
    evaluator = factory(split.train_positives, split.train_negatives, seed)
    return adver_suc(evaluator, split.test_positives, split.test_negatives)
