"""Adam with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, cfg: AdamConfig):
    """One Adam update; returns (new_params, state). state is mutated."""
    state.t += 1
    t = state.t
    b1, b2 = cfg.beta1, cfg.beta2
    new_params = {}
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p, dtype=np.float64)
            state.v[name] = np.zeros_like(p, dtype=np.float64)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g, dtype=np.float64)
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        new_params[name] = (p - cfg.lr * mhat / (np.sqrt(vhat) + cfg.eps)).astype(p.dtype)
    return new_params, state
