"""Central finite-difference helpers used by tests and diagnostics."""

from __future__ import annotations

import numpy as np

__all__ = ["central_gradient", "hessian_from_grad", "relative_error"]

DEFAULT_STEP = 1e-5


def central_gradient(f, x, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central-difference gradient of a scalar function at x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        g[j] = (f(xp) - f(xm)) / (2.0 * step)
    return g


def hessian_from_grad(grad_f, x, step: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of a vector-valued gradient; columns j = dg/dx_j."""
    x = np.asarray(x, dtype=float)
    n = x.size
    h = np.empty((n, n))
    for j in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        h[:, j] = (grad_f(xp) - grad_f(xm)) / (2.0 * step)
    return h


def relative_error(approx, exact, floor: float = 1.0) -> float:
    """Sup-norm error scaled by max(floor, sup-norm of the exact value)."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    denom = max(floor, float(np.max(np.abs(exact))) if exact.size else 0.0)
    return float(np.max(np.abs(approx - exact))) / denom if approx.size else 0.0
