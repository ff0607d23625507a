"""Adam optimizer with bias correction."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field

import numpy as np

from ..custom_exceptions import DimensionError
from ..custom_exceptions import TrainingError
from .params import ParameterStore


@dataclass
class AdamState:
    """First/second moment estimates per parameter plus the step count."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        params: ParameterStore,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> AdamState:
        return cls(
            lr=lr,
            beta1=betas[0],
            beta2=betas[1],
            eps=eps,
            m={name: np.zeros(t.shape) for name, t in params.items()},
            v={name: np.zeros(t.shape) for name, t in params.items()},
        )


def adam_step(
    params: ParameterStore, grads: Mapping[str, np.ndarray], state: AdamState
) -> tuple[ParameterStore, AdamState]:
    """Apply one Adam update in place and return ``(params, state)``.

    The whole step is refused (nothing changes, ``t`` included) when any
    gradient holds NaN or Inf.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise TrainingError(
                "non-finite gradient, Adam step refused", step=state.t + 1, component=name
            )
        if name in params and np.shape(grad) != params[name].shape:
            raise DimensionError(
                f"gradient for '{name}' has shape {np.shape(grad)}, parameter {params[name].shape}"
            )

    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for name, grad in grads.items():
        if name not in params:
            continue
        m = state.m.setdefault(name, np.zeros_like(grad))
        v = state.v.setdefault(name, np.zeros_like(grad))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        tensor = params[name]
        tensor.data = tensor.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params, state
