"""
Plain SGD with Global-Norm Clipping.
"""

import logging
import math
from typing import Dict, Iterable, Optional

import numpy as np
from django.conf import settings

from apps.autodiff.services import Tensor, backward

logger = logging.getLogger(__name__)

GRAD_CLIP = getattr(settings, 'LAB_GRAD_CLIP', 5.0)


def global_norm(grads: Iterable[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_by_global_norm(grads: Dict[int, np.ndarray], max_norm: Optional[float] = GRAD_CLIP) -> Dict[int, np.ndarray]:
    """New gradient map rescaled so its global norm is at most ``max_norm``."""
    norm = global_norm(grads.values())
    if max_norm is None or norm <= max_norm or norm == 0.0:
        return dict(grads)
    scale = max_norm / norm
    return {key: g * scale for key, g in grads.items()}


class SGD:
    """
    theta <- theta - lr * clip(grad)

    Writes into the parameters' data in place; gradients are never modified.
    """

    def __init__(self, params: Iterable[Tensor], lr: float, clip: Optional[float] = GRAD_CLIP):
        self.params = list(params)
        self.lr = lr
        self.clip = clip

    def step(self, grads: Dict[int, np.ndarray]) -> float:
        """Apply one update; returns the pre-clip global norm."""
        own = {p.id: grads[p.id] for p in self.params if p.id in grads}
        norm = global_norm(own.values())
        if not math.isfinite(norm):
            return norm
        clipped = clip_by_global_norm(own, self.clip)
        for param in self.params:
            if param.id in clipped:
                param.data -= self.lr * clipped[param.id]
        return norm


def compute_gradients(loss: Tensor, params: Iterable[Tensor]) -> Dict[int, np.ndarray]:
    """Gradient of ``loss`` for each of ``params`` (zeros where independent)."""
    params = list(params)
    for param in params:
        param.zero_grad()
    grads = backward(loss, params)
    for param in params:
        param.zero_grad()
    return {param.id: grads[param.id] for param in params}


def named(grads: Dict[int, np.ndarray], params: Iterable[Tensor]) -> Dict[str, np.ndarray]:
    return {param.name: grads[param.id] for param in params if param.id in grads}
