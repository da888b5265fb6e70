"""Bias-corrected Adam over a dict of named parameter arrays."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import NumericError, ShapeError


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params, grads, state: AdamState):
    """Update ``params`` in place from ``grads``; returns ``(params, state)``.

    Moments are created lazily (zeros, parameter dtype) on first use.  All
    gradients are checked before anything is modified, so a non-finite
    gradient leaves both params and state untouched.
    """
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        m = state.first_moment.setdefault(name, np.zeros_like(p))
        v = state.second_moment.setdefault(name, np.zeros_like(p))
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        m_hat = m / p.dtype.type(c1)
        v_hat = v / p.dtype.type(c2)
        p -= p.dtype.type(state.learning_rate) * m_hat / (np.sqrt(v_hat) + p.dtype.type(state.epsilon))
    return params, state


def adam_fresh(lr=1e-4, beta1=0.9, beta2=0.999, epsilon=1e-8):
    if not (lr >= 0 and 0 <= beta1 < 1 and 0 <= beta2 < 1 and epsilon > 0):
        raise ValueError(f"bad Adam hyperparameters lr={lr} betas=({beta1}, {beta2}) eps={epsilon}")
    return AdamState(lr, beta1, beta2, epsilon)
