"""Adam with bias correction and an l2 penalty folded into the gradient."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from firedanger.errors import DimensionError, ParameterError
from firedanger.tensor_core.tensor import Parameter

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    beta1: float = BETA1
    beta2: float = BETA2
    epsilon: float = EPSILON

    @classmethod
    def zeros_like(cls, param: np.ndarray, **hyper) -> AdamState:
        return cls(np.zeros_like(param), np.zeros_like(param), **hyper)


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
    decay: bool = True,
) -> np.ndarray:
    """Return the updated parameter; ``state`` is advanced in place.

    With ``decay`` set, ``2 * weight_decay * param`` is added to the gradient,
    the derivative of ``weight_decay * ||param||^2``.
    """
    if lr < 0:
        raise ParameterError(f"learning rate must be >= 0, got {lr}")
    if param.shape != grad.shape or state.first_moment.shape != param.shape:
        raise DimensionError(f"param {param.shape}, grad {grad.shape} and state {state.first_moment.shape} disagree")
    g = grad
    if decay and weight_decay:
        g = g + (2.0 * weight_decay) * param
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    state.first_moment *= b1
    state.first_moment += (1.0 - b1) * g
    state.second_moment *= b2
    state.second_moment += (1.0 - b2) * (g * g)
    m_hat = state.first_moment / (1.0 - b1**t)
    v_hat = state.second_moment / (1.0 - b2**t)
    update = lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return (param - update).astype(param.dtype, copy=False)


@dataclass
class Adam:
    """Stateful optimizer over a fixed parameter list."""

    params: Sequence[Parameter]
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = BETA1
    beta2: float = BETA2
    epsilon: float = EPSILON
    states: list[AdamState] = field(init=False)

    def __post_init__(self):
        if self.lr < 0:
            raise ParameterError(f"learning rate must be >= 0, got {self.lr}")
        self.params = list(self.params)
        self.states = [
            AdamState.zeros_like(p.data, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon) for p in self.params
        ]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        if self.lr == 0:
            return
        for p, s in zip(self.params, self.states):
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            p.data = adam_step(p.data, grad, s, self.lr, self.weight_decay, getattr(p, "decay", True))
