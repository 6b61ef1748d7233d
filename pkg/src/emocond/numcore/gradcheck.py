"""Central finite-difference oracle for analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import Tensor, backward


def numerical_gradient(f: Callable[..., Tensor], arrays: Sequence[np.ndarray], step: float = 1e-5):
    """Central differences of ``f`` w.r.t. every coordinate of every array."""
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    grads = []
    for k, base in enumerate(arrays):
        g = np.zeros_like(base)
        flat = g.reshape(-1)
        for i in range(base.size):
            plus = base.copy().reshape(-1)
            minus = base.copy().reshape(-1)
            plus[i] += step
            minus[i] -= step
            args_p = [Tensor(a) for a in arrays]
            args_m = [Tensor(a) for a in arrays]
            args_p[k] = Tensor(plus.reshape(base.shape))
            args_m[k] = Tensor(minus.reshape(base.shape))
            flat[i] = (f(*args_p).item() - f(*args_m).item()) / (2.0 * step)
        grads.append(g)
    return grads


def grad_check(f: Callable[..., Tensor], theta, step: float = 1e-5) -> float:
    """Max over coordinates of |analytic - central| / max(1, |central|).

    ``theta`` is one array or a sequence of arrays; ``f`` receives one leaf
    tensor per array and must return a scalar tensor.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if isinstance(theta, (list, tuple)) and theta and all(isinstance(a, (np.ndarray, Tensor)) for a in theta):
        arrays = [np.asarray(getattr(a, "data", a), dtype=np.float64) for a in theta]
    else:
        arrays = [np.asarray(getattr(theta, "data", theta), dtype=np.float64)]
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    grads = backward(f(*leaves), leaves)
    numeric = numerical_gradient(f, arrays, step)
    worst = 0.0
    for leaf, num in zip(leaves, numeric):
        err = np.abs(grads[leaf] - num) / np.maximum(1.0, np.abs(num))
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
