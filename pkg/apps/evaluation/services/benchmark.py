"""
Benchmark Studies.

- decode_benchmark: AdverSuc and machine-vs-random accuracy for every
  decoding system (a generator plus a decode configuration)
- evaluator_study: ERE of each evaluator kind across seeds, and how many
  seeds order them HIER_NEURAL < CONCAT_NEURAL < UNIGRAM_LINEAR
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence

from apps.corpus.services import Dialogue
from apps.decoding.services import DecodeConfig, DecodedResponse, decode_contexts
from apps.evaluation.services.evaluators import CONCAT_NEURAL, HIER_NEURAL, UNIGRAM_LINEAR, Episode
from apps.evaluation.services.report import Row
from apps.evaluation.services.scenarios import SCENARIOS, EvaluatorFactory, adversarial_success, ere, machine_vs_random

logger = logging.getLogger(__name__)

ORDERING = (HIER_NEURAL, CONCAT_NEURAL, UNIGRAM_LINEAR)


@dataclass
class DecodingSystem:
    """A generator and how to decode from it; ``stop_ids`` come from the corpus vocabulary."""
    generator: object
    config: DecodeConfig
    stop_ids: FrozenSet[int]
    backward_generator: Optional[object] = None
    lm: Optional[object] = None

    def decode(self, contexts: Sequence[Sequence[int]], seed: int = 0) -> List[DecodedResponse]:
        models = {}
        if self.backward_generator is not None:
            models['backward_generator'] = self.backward_generator
        if self.lm is not None:
            models['lm'] = self.lm
        return decode_contexts(self.generator, contexts, self.config, seed, stop_ids=self.stop_ids, **models)


def machine_episodes(system: DecodingSystem, dialogues: Sequence[Dialogue], seed: int = 0) -> List[Episode]:
    """One decoded response per dialogue context; empty decodes are dropped."""
    decoded = system.decode([d.context_tokens for d in dialogues], seed)
    return [(d.context, item.response) for d, item in zip(dialogues, decoded) if item.response]


def decode_benchmark(
    systems: Mapping[str, DecodingSystem],
    dialogues: Sequence[Dialogue],
    factory: EvaluatorFactory,
    seed: int = 0,
) -> List[Row]:
    """(system, metric, value) rows for adver_suc and machine_vs_random."""
    rows = []
    for name, system in systems.items():
        outputs = machine_episodes(system, dialogues, seed)
        success = adversarial_success(factory, dialogues, outputs, seed)
        separability = machine_vs_random(factory, outputs, dialogues, seed)
        rows.append((name, 'adver_suc', success))
        rows.append((name, 'machine_vs_random', separability))
        logger.info(f"{name}: AdverSuc {success:.3f}, machine-vs-random {separability:.3f}")
    return rows


@dataclass
class EvaluatorStudy:
    per_seed: Dict[int, Dict[str, float]] = field(default_factory=dict)

    @property
    def ordered_seeds(self) -> int:
        """Seeds whose ERE values satisfy HIER_NEURAL < CONCAT_NEURAL < UNIGRAM_LINEAR."""
        count = 0
        for values in self.per_seed.values():
            if all(kind in values for kind in ORDERING):
                count += int(values[HIER_NEURAL] < values[CONCAT_NEURAL] < values[UNIGRAM_LINEAR])
        return count

    def rows(self) -> List[Row]:
        return [
            (kind, f"ere.seed{seed}", value)
            for seed, values in sorted(self.per_seed.items())
            for kind, value in sorted(values.items())
        ]


def evaluator_study(
    factories: Mapping[str, EvaluatorFactory],
    dialogues: Sequence[Dialogue],
    machine_outputs: Sequence[Episode],
    seeds: Sequence[int] = (1, 2, 3, 4, 5),
    scenarios: Sequence[str] = SCENARIOS,
) -> EvaluatorStudy:
    study = EvaluatorStudy()
    for seed in seeds:
        study.per_seed[seed] = {
            kind: ere(factory, dialogues, machine_outputs, seed, scenarios).ere
            for kind, factory in factories.items()
        }
        logger.info(f"Evaluator study seed {seed}: {study.per_seed[seed]}")
    return study
