"""
Momentum-free AdamW with cosine learning-rate decay
"""

import logging
import math
from typing import Dict

import numpy as np

from ..nn.params import ParamStore

logger = logging.getLogger(__name__)


class AdamW:
    """Adaptive step ``g / sqrt(v_hat)`` with no first moment (beta1 = 0).

    Weight decay is decoupled and only applies to matrices and kernels
    (ndim >= 2). The learning rate follows a cosine from ``lr`` to
    ``min_lr`` over ``total_steps``.
    """

    def __init__(
        self,
        store: ParamStore,
        lr: float = 1e-3,
        weight_decay: float = 0.05,
        total_steps: int = 1,
        beta2: float = 0.999,
        eps: float = 1e-8,
        min_lr: float = 0.0,
    ):
        self.store = store
        self.lr = lr
        self.weight_decay = weight_decay
        self.total_steps = max(1, total_steps)
        self.beta2 = beta2
        self.eps = eps
        self.min_lr = min_lr
        self.steps = 0
        self._v: Dict[str, np.ndarray] = {}

    def lr_at(self, step: int) -> float:
        progress = min(step, self.total_steps) / self.total_steps
        return self.min_lr + 0.5 * (self.lr - self.min_lr) * (1.0 + math.cos(math.pi * progress))

    def step(self) -> float:
        """Apply one update from the accumulated ``grad`` buffers; returns the lr used."""
        lr = self.lr_at(self.steps)
        self.steps += 1
        correction = 1.0 - self.beta2 ** self.steps
        for name, param in list(self.store.items()):
            grad = param.grad
            if grad is None:
                continue
            v = self._v.get(name)
            v = (1.0 - self.beta2) * grad * grad if v is None else self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self._v[name] = v
            update = grad / (np.sqrt(v / correction) + self.eps)
            values = param.data
            if self.weight_decay and param.ndim >= 2:
                values = values * (1.0 - lr * self.weight_decay)
            self.store.assign(name, values - lr * update)
        self.store.bump_version()
        return lr
