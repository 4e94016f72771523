"""
Adam optimizer
Bias-corrected adaptive moment estimation over a dict of named arrays.
Parameters are updated in place so models keep their own references.
"""

from dataclasses import dataclass, field

import numpy as np

from cosgauss_frontend.errors import ShapeMismatchError


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_update(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState) -> AdamState:
    """
    One Adam step for every parameter that has a gradient

    Parameters missing from grads (frozen groups) are left untouched.
    """
    state.step += 1
    bias1 = 1.0 - state.beta1 ** state.step
    bias2 = 1.0 - state.beta2 ** state.step

    for name in sorted(grads):
        g = grads[name]
        p = params[name]
        if g.shape != p.shape:
            raise ShapeMismatchError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")

        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)

        state.m[name] *= state.beta1
        state.m[name] += (1.0 - state.beta1) * g
        state.v[name] *= state.beta2
        state.v[name] += (1.0 - state.beta2) * (g * g)

        m_hat = state.m[name] / bias1
        v_hat = state.v[name] / bias2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)

    return state
