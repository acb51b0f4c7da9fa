"""Central finite-difference gradient checks.

The oracle runs the function in float64; the analytic gradient comes from
a float32 graph, as in training.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def relative_error(analytic, numeric) -> float:
    """max |a - b| / max |b| (normwise); 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    scale = np.abs(b).max()
    diff = np.abs(a - b).max()
    if scale == 0:
        return float(diff)
    return float(diff / scale)


def numeric_grad(fn, inputs: list[np.ndarray], index: int, h: float = 1e-3, entries=None) -> np.ndarray:
    """d fn / d inputs[index] by central differences in float64.

    ``fn`` maps a list of float64 Tensors to a scalar Tensor. ``entries``
    restricts the check to selected flat indices (others are left at 0).
    """
    base = [np.array(x, dtype=np.float64) for x in inputs]
    target = base[index]
    flat = target.reshape(-1)
    grad = np.zeros_like(flat)
    idx = range(flat.size) if entries is None else entries
    for i in idx:
        old = flat[i]
        flat[i] = old + h
        up = fn([Tensor(x, dtype=np.float64) for x in base]).item()
        flat[i] = old - h
        down = fn([Tensor(x, dtype=np.float64) for x in base]).item()
        flat[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad.reshape(target.shape)


def analytic_grads(fn, inputs: list[np.ndarray], dtype=np.float32) -> list[np.ndarray]:
    tensors = [Tensor(x, requires_grad=True, dtype=dtype) for x in inputs]
    fn(tensors).backward()
    return [t.grad for t in tensors]


def check_gradients(fn, inputs: list[np.ndarray], h: float = 1e-3) -> list[float]:
    """Relative error per input between the f32 analytic and f64 numeric gradient."""
    grads = analytic_grads(fn, inputs)
    return [relative_error(g, numeric_grad(fn, inputs, i, h)) for i, g in enumerate(grads)]
