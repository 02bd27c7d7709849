"""ADAM and the plateau learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np


@dataclass
class AdamState:
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def fresh(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """In-place bias-corrected ADAM update of ``params``; returns the advanced state."""
    if params.keys() != grads.keys() or params.keys() != state.m.keys():
        raise ValueError("parameter, gradient and state names differ")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"{k}: gradient shape {g.shape} vs {params[k].shape}")
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        with np.errstate(over="ignore", invalid="ignore"):
            step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        params[k] -= step.astype(params[k].dtype, copy=False)
    return state


@dataclass(frozen=True)
class ScheduleConfig:
    decay: float = 0.8
    threshold: float = 1e-4
    patience: int = 5


def lr_schedule_update(history: Sequence[float], lr: float, cfg: ScheduleConfig = ScheduleConfig()) -> float:
    """Decay ``lr`` when the last ``patience`` losses did not improve on the best before them.

    An improvement of exactly ``threshold`` counts as improved; a tiny relative slack
    absorbs float rounding of the difference.
    """
    if not history:
        raise ValueError("empty validation history")
    if len(history) <= cfg.patience:
        return lr
    best_before = min(history[:-cfg.patience])
    recent = min(history[-cfg.patience:])
    slack = 1e-9 * max(1.0, abs(best_before))
    if recent > best_before - cfg.threshold + slack:
        return lr * cfg.decay
    return lr
