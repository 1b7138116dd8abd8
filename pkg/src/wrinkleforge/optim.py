"""AdamW with decoupled weight decay, and the cosine warm-restart schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatchError


@dataclass
class AdamWState:
    """Per-parameter first/second moments plus the shared step counter."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.05
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
               state: AdamWState, lr: float) -> None:
    """One AdamW update, in place.

    Weight decay is decoupled from the gradient path:
        p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)
    Moment buffers are created lazily on the first step for each parameter.
    """
    if set(params) != set(grads):
        raise ShapeMismatchError("params and grads must share the same names")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"{name}: grad {g.shape} vs param {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p, dtype=np.float64)
            state.v[name] = np.zeros_like(p, dtype=np.float64)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps) + state.weight_decay * p
        p -= (lr * update).astype(p.dtype, copy=False)


@dataclass(frozen=True)
class SgdrSchedule:
    """Cosine decay with warm restarts.

    Within period k (length T_k, peak eta_k) the rate at offset t is
    eta_k * (1 + cos(pi * t / T_k)) / 2. When `doubling` is on, each period
    is twice as long as the previous one; `period_decay` multiplies the peak
    at every restart (1.0 keeps it constant).
    """

    initial_period: int
    max_lr: float
    period_decay: float = 1.0
    doubling: bool = True

    def __post_init__(self):
        if self.initial_period < 1:
            raise ValueError("initial_period must be >= 1")
        if self.max_lr < 0:
            raise ValueError("max_lr must be nonnegative")

    def to_dict(self) -> dict:
        return {"initial_period": self.initial_period, "max_lr": self.max_lr,
                "period_decay": self.period_decay, "doubling": self.doubling}

    @classmethod
    def from_dict(cls, d: dict) -> "SgdrSchedule":
        return cls(**d)


def sgdr_lr(schedule: SgdrSchedule, epoch: int) -> float:
    """Learning rate at a given epoch (period boundaries restart the cosine)."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    t = epoch
    period = schedule.initial_period
    peak = schedule.max_lr
    while t >= period:
        t -= period
        if schedule.doubling:
            period *= 2
        peak *= schedule.period_decay
    return peak * (1.0 + math.cos(math.pi * t / period)) / 2.0
