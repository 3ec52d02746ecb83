"""Central finite-difference gradient checking."""
from __future__ import annotations

import numpy as np


def numerical_gradient(f, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` w.r.t. ``x`` (perturbed in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"], op_flags=["readwrite"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2.0 * step)
    return grad


def relative_error(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b))
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def check_layer(layer, x: np.ndarray, rng: np.random.Generator, train: bool = True, step: float = 1e-4) -> dict:
    """Compare analytic input and parameter gradients of ``layer`` against central differences.

    Uses the scalar objective ``sum(forward(x) * w)`` for a fixed random ``w``.
    Returns ``{name: relative error}`` with ``"x"`` for the input.
    """
    out = layer.forward(x, train)
    w = rng.standard_normal(out.shape)

    def objective():
        return float(np.sum(layer.forward(x, train) * w))

    layer.forward(x, train)
    dx = layer.backward(w)
    analytic = {"x": dx}
    analytic.update({k: v.copy() for k, v in layer.grads.items()})
    errors = {"x": relative_error(dx, numerical_gradient(objective, x, step))}
    for k, p in layer.params.items():
        errors[k] = relative_error(analytic[k], numerical_gradient(objective, p, step))
    return errors
