from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState, lr: float,
              betas=(0.9, 0.999), eps: float = 1e-8):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``."""
    b1, b2 = betas
    t = state.t + 1
    m = b1 * state.m + (1 - b1) * grad
    v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = m / (1 - b1 ** t)
    v_hat = v / (1 - b2 ** t)
    new = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new, AdamState(m, v, t)


def step_lr(epoch: int, lr0: float, decay: float = 0.5, period: int = 50) -> float:
    """Step schedule: ``lr0 * decay ** (epoch // period)``."""
    return lr0 * decay ** (epoch // period)
