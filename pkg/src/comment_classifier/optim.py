"""Adam with bias correction.

One ``AdamState`` tracks one parameter tensor. Defaults are the common
fine-tuning values: beta1=0.9, beta2=0.999, eps=1e-8, no weight decay.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, param: Tensor, lr: float, beta1: float = 0.9,
                  beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(
            m=np.zeros_like(param.data),
            v=np.zeros_like(param.data),
            lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        )


def adam_step(param: Tensor, state: AdamState) -> None:
    """Apply one bias-corrected Adam update in place.

    Increments ``state.t`` by exactly one. The gradient is left intact
    for the caller to zero.
    """
    if param.grad is None:
        raise ValueError("adam_step requires a populated gradient")
    g = param.grad
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * g
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * (g * g)
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    param.data -= (state.lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(
        param.data.dtype, copy=False
    )


@dataclass
class Adam:
    """Convenience wrapper stepping a whole parameter list together."""

    params: list[Tensor]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    total_steps: int = 0
    states: list[AdamState] = field(init=False)

    def __post_init__(self) -> None:
        self.states = [
            AdamState.for_param(p, self.lr, self.beta1, self.beta2, self.eps)
            for p in self.params
        ]

    def step(self) -> None:
        for p, s in zip(self.params, self.states):
            adam_step(p, s)
        self.total_steps += 1

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
