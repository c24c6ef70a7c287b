"""Adam optimizer over named tensors"""

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from ..core.exceptions import DimensionError, NumericError, ValidationError
from .tensor import Tensor


@dataclass
class AdamState:
    """Per-parameter moments, step counter and hyperparameters"""
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)

    def validate(self):
        if self.lr <= 0:
            raise ValidationError("learning rate must be positive", field="lr")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("Adam betas must lie in [0, 1)", field="beta1")
        if self.eps <= 0:
            raise ValidationError("Adam eps must be positive", field="eps")
        return True


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> AdamState:
    """Apply one bias-corrected Adam update in place and return the state"""
    if len(params) != len(grads):
        raise DimensionError("params and grads differ in length", (len(params),), (len(grads),))
    for param, grad in zip(params, grads):
        if param.shape != np.shape(grad):
            raise DimensionError(f"gradient shape for {param.name}", param.shape, np.shape(grad))
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for {param.name}",
                               diagnostics={"name": param.name, "step": state.step + 1})

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for param, grad in zip(params, grads):
        key = param.name
        m = state.first_moment.get(key)
        v = state.second_moment.get(key)
        if m is None:
            m = np.zeros_like(param.value)
            v = np.zeros_like(param.value)
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[key] = m
        state.second_moment[key] = v
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.value = param.value - update
    return state
