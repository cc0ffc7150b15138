"""Adam optimizer with a step-halving learning-rate schedule."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


def halved_lr(step: int, lr0: float, half_every: int) -> float:
    """lr0 * 2^-(step // half_every); the schedule used by the trainer."""
    if half_every <= 0:
        return lr0
    return lr0 * 2.0 ** (-(step // half_every))


class Adam:
    """Standard Adam over a fixed parameter list.

    ``step()`` consumes the gradients populated by ``backward()`` and
    clears them afterwards; parameters without a gradient are an error.
    """

    def __init__(self, params: Sequence[Tensor], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"Adam: lr must be positive, got {lr}")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        missing = [i for i, p in enumerate(self.params) if p.grad is None]
        if missing:
            raise ValueError(f"Adam.step: {len(missing)} parameter(s) have no gradient (first index {missing[0]})")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[i] / bc1
            v_hat = self.v[i] / bc2
            p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon)
            p.grad = None

    def zero_grad(self):
        for p in self.params:
            p.grad = None
