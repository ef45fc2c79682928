"""Adam optimizer over flat name->array parameter dicts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> tuple[dict, AdamState]:
    """One bias-corrected Adam update; returns fresh params and state."""
    t = state.step_count + 1
    new_params, m_out, v_out = {}, {}, {}
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"grad shape {g.shape} != param shape {p.shape} for {name}")
        m = state.first_moment.get(name, np.zeros_like(p))
        v = state.second_moment.get(name, np.zeros_like(p))
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        new_params[name] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        m_out[name] = m
        v_out[name] = v
    new_state = AdamState(lr=state.lr, beta1=state.beta1, beta2=state.beta2,
                          epsilon=state.epsilon, step_count=t,
                          first_moment=m_out, second_moment=v_out)
    return new_params, new_state
