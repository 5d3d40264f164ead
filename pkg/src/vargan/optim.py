"""Adam with bias correction over flat parameter vectors.

Functional style: a step returns the new vector and new moment state, so
trainer states stay plain immutable data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["AdamState", "init_adam", "adam_step"]


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0


def init_adam(n: int) -> AdamState:
    return AdamState(np.zeros(n), np.zeros(n), 0)


def adam_step(flat: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              beta1: float = 0.0, beta2: float = 0.9,
              eps: float = 1e-8):
    """One descent step; negate the gradient upstream for ascent."""
    g = np.asarray(grad, dtype=np.float64)
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * np.square(g)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_flat = flat - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_flat, AdamState(m, v, t)
