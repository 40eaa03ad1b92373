"""Adam with coupled L2 weight decay."""

from __future__ import annotations

import numpy as np

from .layers import Parameter


class Adam:
    """Per-parameter first/second moment estimates with bias correction.

    Weight decay enters the gradient (g <- grad + wd * theta) before the
    moment updates, i.e. classic L2 regularization rather than decoupled decay.
    """

    def __init__(self, params: list[Parameter], lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 1e-4):
        self.params = [p for p in params if p.trainable]
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad if self.weight_decay == 0.0 else p.grad + self.weight_decay * p.value
            m[...] = self.beta1 * m + (1.0 - self.beta1) * g
            v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
            p.value[...] = p.value - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
