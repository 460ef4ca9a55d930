"""
Adversarial Success and Evaluator Reliability Error.

AdverSuc = 1 - balanced accuracy, where the balanced accuracy is the mean
of the per-class accuracies so that chance level is exactly 0.5.

ERE = mean over scenarios of |AdverSuc - gold|, each scenario weighted
equally.
"""

import logging
from typing import Dict, Mapping, Sequence, Tuple

import numpy as np

from apps.evaluation.exceptions import EvaluationError
from apps.seqmodels.services import HUMAN, MACHINE

logger = logging.getLogger(__name__)


def balanced_accuracy(evaluator, positives: Sequence, negatives: Sequence) -> float:
    """Mean of the accuracy on human (positive) and machine (negative) episodes."""
    if not positives or not negatives:
        raise EvaluationError("both test sets must be non-empty")
    hits_pos = np.mean([evaluator.predict(context, response) == HUMAN for context, response in positives])
    hits_neg = np.mean([evaluator.predict(context, response) == MACHINE for context, response in negatives])
    return float(0.5 * (hits_pos + hits_neg))


def adver_suc_from_accuracy(accuracy: float) -> float:
    if not 0.0 <= accuracy <= 1.0:
        raise EvaluationError(f"accuracy must lie in [0, 1], got {accuracy}")
    return 1.0 - accuracy


def adver_suc(evaluator, positives: Sequence, negatives: Sequence) -> float:
    """Fraction of the time the evaluator is fooled."""
    return adver_suc_from_accuracy(balanced_accuracy(evaluator, positives, negatives))


def ere_from_measurements(measured: Mapping[str, float], gold: Mapping[str, float]) -> Tuple[float, Dict[str, float]]:
    """
    (ERE, per-scenario |measured - gold|) over the scenarios in ``measured``.
    """
    if not measured:
        raise EvaluationError("no scenario measurements")
    unknown = set(measured) - set(gold)
    if unknown:
        raise EvaluationError(f"no gold value for {', '.join(sorted(unknown))}")
    deviations = {kind: abs(value - gold[kind]) for kind, value in measured.items()}
    return float(sum(deviations.values()) / len(deviations)), deviations
