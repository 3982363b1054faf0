"""AdamW with decoupled weight decay and the halving learning-rate schedule."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 64
    lr: float = 1e-3
    lr_halving_interval: int = 50000
    weight_decay: float = 0.01
    max_iters: int = 1000
    seed: int = 0
    stage: str = "stage1"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_interval: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.batch_size < 1 or self.max_iters < 1 or self.lr_halving_interval < 1:
            raise ValueError("batch_size, max_iters, lr_halving_interval must be positive")
        if self.stage not in ("stage1", "stage2", "joint"):
            raise ValueError(f"stage must be stage1, stage2, or joint, got {self.stage!r}")

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Desk-scale defaults: small batches, fast halving."""
        base = dict(batch_size=2, lr_halving_interval=200, max_iters=300)
        base.update(overrides)
        return cls(**base)


def lr_schedule(base_lr: float, iteration: int, halving_interval: int) -> float:
    """base_lr * 0.5^floor(iteration / halving_interval); iteration counts from 0."""
    if iteration < 0:
        raise ValueError("iteration must be nonnegative")
    return base_lr * 0.5 ** (iteration // halving_interval)


@dataclass
class AdamWState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamWState":
        state = cls()
        for name, p in params.items():
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        return state


def adamw_step(params: dict, state: AdamWState, lr: float, config: TrainConfig) -> bool:
    """One decoupled-weight-decay Adam update over named parameter tensors.

    Any non-finite gradient aborts the whole step (no parameter moves, the
    step counter stays put) and returns False after logging the offending
    parameter name.
    """
    for name, p in params.items():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient; call backward first")
        if not np.all(np.isfinite(p.grad)):
            log.warning("non-finite gradient in %r; skipping optimizer step %d",
                        name, state.step + 1)
            return False

    state.step += 1
    t = state.step
    b1, b2 = config.beta1, config.beta2
    bias1 = 1.0 - b1**t
    bias2 = 1.0 - b2**t
    for name, p in params.items():
        g = p.grad
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        if config.weight_decay:
            p.data -= lr * config.weight_decay * p.data
        p.data -= (lr / bias1) * m / (np.sqrt(v / bias2) + config.eps)
    return True
