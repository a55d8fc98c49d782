"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from ..exceptions import OptimizerError
from .params import ModelParameters


class AdamState:
    """Per-parameter first/second moment estimates plus the step counter."""

    def __init__(
        self,
        params: ModelParameters,
        learning_rate: float = 5e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.epsilon = float(epsilon)
        self.step = 0
        self.first_moment = {name: np.zeros_like(t.data) for name, t in params.entries.items()}
        self.second_moment = {name: np.zeros_like(t.data) for name, t in params.entries.items()}


def adam_step(params: ModelParameters, state: AdamState) -> ModelParameters:
    """Apply one Adam update in place and clear the gradients.

    Raises OptimizerError (and leaves parameters untouched) if any gradient
    is non-finite.
    """
    for name, t in params.entries.items():
        g = t.grad
        if g is None:
            raise OptimizerError(f"parameter {name!r} has no gradient")
        if not np.all(np.isfinite(g)):
            raise OptimizerError(f"non-finite gradient for parameter {name!r}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.step
    bc2 = 1.0 - b2 ** state.step
    for name, t in params.entries.items():
        g = t.grad
        m = state.first_moment[name]
        v = state.second_moment[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= state.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
        t.grad = np.zeros_like(t.data)
    return params
