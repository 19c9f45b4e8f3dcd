"""Adam with per-tensor moment buffers and loss-term L2 weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


@dataclass
class OptimConfig:
    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")


@dataclass
class AdamState:
    """First/second moments and step counter, kept per tensor name."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: dict[str, int] = field(default_factory=dict)

    def ensure(self, name: str, like: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros_like(like, dtype=np.float64)
            self.v[name] = np.zeros_like(like, dtype=np.float64)
            self.step[name] = 0


def clipped_sgd_step(
    named_params: dict[str, Tensor], learning_rate: float, max_norm: float = 1.0
):
    """Plain gradient step with global-norm clipping across the given tensors.

    Used for the generator phase: its objective is unwinnable against a
    norm/sign-separable prior, so an adaptive optimizer would keep applying
    full-size steps along the (useless) adversarial direction and crush the
    supervised task.  A clipped first-order step bounds that pressure.
    """
    grads = {
        name: p.grad.astype(np.float64)
        for name, p in named_params.items()
        if p.grad is not None
    }
    if not grads:
        return
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    factor = learning_rate * (min(1.0, max_norm / total) if total > 0 else 1.0)
    for name, g in grads.items():
        p = named_params[name]
        p.data -= (factor * g).astype(p.data.dtype)


def adam_step(named_params: dict[str, Tensor], state: AdamState, cfg: OptimConfig):
    """One Adam update over the given tensors, reading each tensor's ``grad``.

    Weight decay enters as an additive ``wd * theta`` gradient term, i.e. the
    L2 penalty lives in the loss rather than being decoupled from the
    moments.  Tensors with no gradient are treated as having zero gradient
    (they still decay).
    """
    for name, p in named_params.items():
        state.ensure(name, p.data)
        g = (
            np.zeros_like(p.data, dtype=np.float64)
            if p.grad is None
            else p.grad.astype(np.float64)
        )
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data.astype(np.float64)
        m, v = state.m[name], state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        state.step[name] += 1
        t = state.step[name]
        bc1 = 1.0 - cfg.beta1**t
        bc2 = 1.0 - cfg.beta2**t
        update = (cfg.learning_rate * (m / bc1)) / (np.sqrt(v / bc2) + cfg.epsilon_hat)
        p.data -= update.astype(p.data.dtype)
