"""Adam with bias correction over a named parameter table."""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class OptimizerState:
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        # lr == 0 is a valid no-op run
        if self.learning_rate < 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.learning_rate}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError(f"Adam betas must be in [0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ConfigError(f"Adam epsilon must be positive, got {self.epsilon}")


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: OptimizerState,
) -> OptimizerState:
    """One Adam update of every parameter that has a gradient.

    Parameters without an entry in ``grads`` keep their values and moments.
    The step counter advances once per call.
    """
    for name, grad in grads.items():
        if name not in params:
            raise DimensionError(f"gradient for unknown parameter {name!r}")
        if grad.shape != params[name].shape:
            raise DimensionError(
                f"gradient for {name} has shape {grad.shape}, parameter is {params[name].shape}"
            )

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, grad in grads.items():
        param = params[name]
        g = np.asarray(grad, dtype=np.float64)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - state.beta1) * g if m is None else state.beta1 * m + (1.0 - state.beta1) * g
        v = (1.0 - state.beta2) * g * g if v is None else state.beta2 * v + (1.0 - state.beta2) * g * g
        state.m[name], state.v[name] = m, v
        update = state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
        param.assign(param.data - update.astype(param.dtype))
    return state
