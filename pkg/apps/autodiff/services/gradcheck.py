"""
Finite-Difference Gradient Check.

Compares the analytic gradients produced by ``backward`` with central
differences, one parameter entry at a time.
"""

import logging
from typing import Callable, Sequence

import numpy as np

from apps.autodiff.exceptions import InvalidEpsilon, NonDeterministicFunction
from apps.autodiff.services.tensor import Tensor, backward, no_grad

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-4


def _evaluate(fn: Callable[[], Tensor]) -> float:
    with no_grad():
        return fn().item()


def finite_difference_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = DEFAULT_EPS,
) -> float:
    """
    Maximum relative error between analytic and central-difference gradients.

    Args:
        fn: zero-argument callable rebuilding the scalar loss from ``params``
        params: leaf tensors to perturb (their ``grad`` is overwritten)
        eps: central-difference step

    Returns:
        max over entries of |analytic - numeric| / max(1, |numeric|)

    Raises:
        InvalidEpsilon: eps <= 0
        NonDeterministicFunction: two evaluations at the same point disagree
    """
    if not eps > 0:
        raise InvalidEpsilon(eps)

    first, second = _evaluate(fn), _evaluate(fn)
    if first != second:
        raise NonDeterministicFunction(first, second)

    for param in params:
        param.zero_grad()
    grads = backward(fn(), params)

    worst = 0.0
    for param in params:
        analytic = grads[param.id]
        flat = param.data.reshape(-1)
        flat_grad = analytic.reshape(-1)
        for index in range(flat.size):
            original = flat[index]
            flat[index] = original + eps
            upper = _evaluate(fn)
            flat[index] = original - eps
            lower = _evaluate(fn)
            flat[index] = original
            numeric = (upper - lower) / (2.0 * eps)
            error = abs(flat_grad[index] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, error)
        param.zero_grad()

    logger.debug(f"Gradient check over {len(params)} tensors: max rel. error {worst:.3e}")
    return float(worst)
