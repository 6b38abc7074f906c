"""Adam with bias correction and the warmup learning-rate schedule."""

from __future__ import annotations

import math
from typing import Mapping, Optional

import numpy as np

from .params import ParameterStore


def warmup_lr(step: int, base_lr: float, warmup_steps: int) -> float:
    """Linear ramp to ``base_lr`` over ``warmup_steps``, then inverse-sqrt decay.

    lr(t) = base_lr * min(1, t / warmup) * sqrt(warmup / max(t, warmup)), t >= 1,
    so lr(1) = base_lr / warmup and lr(warmup) = base_lr.
    """
    if step < 1:
        raise ValueError("steps are counted from 1")
    if warmup_steps <= 0:
        return base_lr / math.sqrt(step) if step > 1 else base_lr
    ramp = min(1.0, step / warmup_steps)
    return base_lr * ramp * math.sqrt(warmup_steps / max(step, warmup_steps))


class Adam:
    """Bias-corrected Adam; moment buffers are created lazily per parameter name."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}

    def step(self, params: ParameterStore, lr: float, grads: Optional[Mapping[str, np.ndarray]] = None) -> None:
        for name, tensor in params.items():
            g = grads.get(name) if grads is not None else tensor.grad
            if g is None:
                continue
            if name not in self.m:
                self.m[name] = np.zeros_like(tensor.data)
                self.v[name] = np.zeros_like(tensor.data)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1 ** t)
            v_hat = v / (1 - self.beta2 ** t)
            update = lr * m_hat / (np.sqrt(v_hat) + self.eps)
            tensor.data = (tensor.data - update).astype(tensor.data.dtype, copy=False)


def adam_step(params: ParameterStore, grads: Mapping[str, np.ndarray], lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              state: Optional[Adam] = None) -> Adam:
    """Apply one Adam update in place and return the (possibly new) optimizer state."""
    state = state if state is not None else Adam(beta1, beta2, eps)
    state.step(params, lr, grads)
    return state
