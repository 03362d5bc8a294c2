"""Adam optimizer with a cosine-annealing learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


class DivergenceError(RuntimeError):
    """Raised when non-finite gradients are encountered and skipping is disabled."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 100
    lr_min: float = 0.0
    schedule_period: int | None = None  # defaults to epochs
    seed: int = 0
    skip_nonfinite: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")


def cosine_lr(config: TrainConfig, epoch: int) -> float:
    """Annealed learning rate at integer epoch (lr at 0, lr_min at period)."""
    period = config.schedule_period or config.epochs
    frac = min(max(epoch / period, 0.0), 1.0)
    return config.lr_min + 0.5 * (config.lr - config.lr_min) * (1.0 + np.cos(np.pi * frac))


@dataclass
class Adam:
    config: TrainConfig
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0
    skipped: int = 0

    def step(self, params: dict[str, Tensor], lr: float | None = None):
        cfg = self.config
        lr = cfg.lr if lr is None else lr
        for name, p in params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                if cfg.skip_nonfinite:
                    self.skipped += 1
                    continue
                raise DivergenceError(f"non-finite gradient for {name}")
        self.t += 1
        b1, b2 = cfg.beta1, cfg.beta2
        for name, p in params.items():
            g = p.grad
            if g is None or not np.all(np.isfinite(g)):
                continue
            if name not in self.m:
                self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            self.m[name] = b1 * self.m[name] + (1 - b1) * g
            self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            m_hat = self.m[name] / (1 - b1 ** self.t)
            v_hat = self.v[name] / (1 - b2 ** self.t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + cfg.eps)

    def zero_grad(self, params: dict[str, Tensor]):
        for p in params.values():
            p.zero_grad()
