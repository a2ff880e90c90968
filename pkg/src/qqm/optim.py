"""Adam with bias-corrected moments."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError


@dataclass
class AdamSettings:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.lr > 0 or not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1 or not self.eps > 0:
            raise ConfigurationError("invalid Adam settings")


@dataclass
class OptimizerState:
    theta: np.ndarray
    settings: AdamSettings = field(default_factory=AdamSettings)
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step_count: int = 0

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        if self.m is None:
            self.m = np.zeros_like(self.theta)
        if self.v is None:
            self.v = np.zeros_like(self.theta)
        if self.m.shape != self.theta.shape or self.v.shape != self.theta.shape:
            raise ConfigurationError("moment vectors must match theta")

    def step(self, grad) -> np.ndarray:
        s = self.settings
        grad = np.asarray(grad, dtype=float)
        self.step_count += 1
        self.m = s.beta1 * self.m + (1 - s.beta1) * grad
        self.v = s.beta2 * self.v + (1 - s.beta2) * grad * grad
        m_hat = self.m / (1 - s.beta1 ** self.step_count)
        v_hat = self.v / (1 - s.beta2 ** self.step_count)
        self.theta = self.theta - s.lr * m_hat / (np.sqrt(v_hat) + s.eps)
        return self.theta
