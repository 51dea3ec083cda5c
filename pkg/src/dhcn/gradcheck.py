"""Central finite-difference checks against tape gradients."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .autograd import Tape, Tensor


def numerical_gradient(fn: Callable[[], Tensor], t: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn() / d t by central differences; ``fn`` is re-evaluated with ``t`` perturbed in place."""
    grad = np.zeros_like(t.value)
    flat = t.value.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        up = fn().item()
        flat[k] = orig - h
        down = fn().item()
        flat[k] = orig
        grad.reshape(-1)[k] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Norm-wise relative error; 0.0 when both gradients vanish."""
    diff = float(np.linalg.norm(analytic - numeric))
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale == 0.0:
        return 0.0
    return diff / scale


def tape_gradients(fn: Callable[[], Tensor], params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    for t in params.values():
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    return {name: (t.grad if t.grad is not None else np.zeros_like(t.value)) for name, t in params.items()}


def check_gradients(fn: Callable[[], Tensor], params: Mapping[str, Tensor], h: float = 1e-5) -> dict[str, float]:
    """Relative error between tape and finite-difference gradients for every named tensor."""
    analytic = tape_gradients(fn, params)
    return {name: relative_error(analytic[name], numerical_gradient(fn, t, h)) for name, t in params.items()}
