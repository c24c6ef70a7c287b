"""Finite-difference gradient checks against tape gradients"""

from typing import Callable, Dict, Sequence

import numpy as np

from .tensor import Tape, Tensor


def _relative_errors(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float) -> Dict[str, float]:
    with Tape() as tape:
        loss = loss_fn()
    analytic = tape.backward(loss, params)

    errors = {}
    for position, (param, grad) in enumerate(zip(params, analytic)):
        base = param.value.copy()
        worst = 0.0
        try:
            for i in range(base.size):
                shifted = base.copy()
                shifted.flat[i] += eps
                param.value = shifted
                upper = loss_fn().item()
                shifted.flat[i] = base.flat[i] - eps
                param.value = shifted
                lower = loss_fn().item()
                numeric = (upper - lower) / (2.0 * eps)
                worst = max(worst, abs(grad.flat[i] - numeric) / max(1.0, abs(numeric)))
        finally:
            param.value = base
        errors[param.name or f"param_{position}"] = worst
    return errors


def grad_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max over coordinates of |analytic - numeric| / max(1, |numeric|).

    ``loss_fn`` must be deterministic: all sampling frozen.
    """
    errors = _relative_errors(loss_fn, params, eps)
    return max(errors.values()) if errors else 0.0


def grad_check_report(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-5) -> Dict[str, float]:
    """Same check, broken down per parameter name"""
    return _relative_errors(loss_fn, params, eps)
