"""Adam with a warmup/inverse-sqrt-decay learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter


@dataclass
class OptimizerConfig:
    peak_lr: float = 1e-3
    warmup_steps: int = 200
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    grad_clip: float = 5.0

    def lr_at(self, step: int) -> float:
        """Learning rate for 1-based ``step``: linear warmup to ``peak_lr``, then ~1/sqrt(step)."""
        if self.peak_lr == 0.0:
            return 0.0
        step = max(step, 1)
        if self.warmup_steps <= 0:
            return self.peak_lr
        return self.peak_lr * min(step / self.warmup_steps, (self.warmup_steps / step) ** 0.5)


class Adam:
    def __init__(self, params: list[Parameter], config: OptimizerConfig | None = None):
        self.params = list(params)
        self.config = config or OptimizerConfig()
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self, scale: float = 1.0) -> float:
        """Apply one update from the accumulated gradients (multiplied by ``scale``).

        Returns the global gradient norm before clipping.
        """
        cfg = self.config
        self.step_count += 1
        grads = [p.grad * scale for p in self.params]
        norm = float(np.sqrt(np.sum([np.vdot(g, g) for g in grads])))
        if cfg.grad_clip and norm > cfg.grad_clip:
            grads = [g * (cfg.grad_clip / norm) for g in grads]
        lr = cfg.lr_at(self.step_count)
        if lr == 0.0:
            return norm
        b1, b2 = cfg.beta1, cfg.beta2
        c1 = 1.0 - b1 ** self.step_count
        c2 = 1.0 - b2 ** self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
        return norm

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()
