"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Update ``params`` (name -> Tensor) in place from ``grads`` (name -> array).

    Parameters without a gradient entry are left untouched.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {p.data.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        dt = p.data.dtype.type
        m *= dt(state.beta1)
        m += dt(1 - state.beta1) * g
        v *= dt(state.beta2)
        v += dt(1 - state.beta2) * (g * g)
        p.data -= dt(state.lr) * (m / dt(c1)) / (np.sqrt(v / dt(c2)) + dt(state.eps))
