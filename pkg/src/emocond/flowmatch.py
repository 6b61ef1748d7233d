"""Conditional flow matching: velocity regression and Euler sampling.

Training pairs a noise draw ``x0`` with a data frame ``x1`` at a uniform time
``t``; the network sees ``x_t = (1 - t) x0 + t x1`` and regresses onto the
straight-line velocity ``x1 - x0``. Sampling integrates the learned field
from t=0 to t=1 with fixed Euler steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .errors import DimensionError, DivergenceError
from .optim import Adam

DEFAULT_STEPS = 50


@dataclass
class VectorFieldNet:
    """Two tanh hidden layers over ``concat(x_t, t, cond)``."""

    W1: nc.Tensor
    b1: nc.Tensor
    W2: nc.Tensor
    b2: nc.Tensor
    W3: nc.Tensor
    b3: nc.Tensor
    feature_dim: int
    cond_dim: int

    @classmethod
    def init(cls, feature_dim: int, cond_dim: int, hidden: int, gen: np.random.Generator) -> "VectorFieldNet":
        fan_in = feature_dim + 1 + cond_dim

        def w(shape, fan):
            return nc.Tensor(gen.normal(scale=1.0 / math.sqrt(fan), size=shape), requires_grad=True)

        def zeros(n):
            return nc.Tensor(np.zeros(n), requires_grad=True)

        return cls(w((fan_in, hidden), fan_in), zeros(hidden), w((hidden, hidden), hidden), zeros(hidden),
                   w((hidden, feature_dim), hidden), zeros(feature_dim), feature_dim, cond_dim)

    def parameters(self):
        return [self.W1, self.b1, self.W2, self.b2, self.W3, self.b3]

    def __call__(self, x_t, t, cond=None) -> nc.Tensor:
        x_t = nc.constant(x_t)
        n = x_t.shape[0]
        t_col = nc.Tensor(np.asarray(t, dtype=np.float64).reshape(n, 1))
        parts = [x_t, t_col]
        if self.cond_dim:
            cond = nc.constant(cond)
            if cond.shape != (n, self.cond_dim):
                raise DimensionError(f"cond has shape {cond.shape}, expected ({n}, {self.cond_dim})")
            parts.append(cond)
        if x_t.shape != (n, self.feature_dim):
            raise DimensionError(f"x_t has shape {x_t.shape}, expected ({n}, {self.feature_dim})")
        h = nc.tanh(nc.add_row(nc.matmul(nc.concat_cols(parts), self.W1), self.b1))
        h = nc.tanh(nc.add_row(nc.matmul(h, self.W2), self.b2))
        return nc.add_row(nc.matmul(h, self.W3), self.b3)

    def predict(self, x_t: np.ndarray, t, cond=None) -> np.ndarray:
        """Graph-free forward pass for sampling."""
        n = x_t.shape[0]
        cols = [x_t, np.full((n, 1), float(t)) if np.isscalar(t) else np.asarray(t).reshape(n, 1)]
        if self.cond_dim:
            cols.append(np.asarray(cond))
        h = np.tanh(np.concatenate(cols, axis=1) @ self.W1.data + self.b1.data)
        h = np.tanh(h @ self.W2.data + self.b2.data)
        return h @ self.W3.data + self.b3.data


def interpolate(x0, x1, t):
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    return (1.0 - t) * np.asarray(x0) + t * np.asarray(x1)


def cfm_loss(net, x0, x1, t, cond=None) -> nc.Tensor:
    """Mean over the batch of ||net(x_t, t, cond) - (x1 - x0)||^2."""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(-1)
    if x0.shape != x1.shape or x0.ndim != 2 or t.shape != (x0.shape[0],):
        raise DimensionError(f"cfm_loss: x0 {x0.shape}, x1 {x1.shape}, t {t.shape} are inconsistent")
    pred = nc.constant(net(interpolate(x0, x1, t), t, cond))
    if pred.shape != x0.shape:
        raise DimensionError(f"vector field returned {pred.shape}, expected {x0.shape}")
    resid = pred - nc.Tensor(x1 - x0)
    return nc.sum(nc.square(resid)) / float(x0.shape[0])


def _velocity(net, x, t, cond):
    if hasattr(net, "predict"):
        return net.predict(x, t, cond)
    out = net(x, np.full(x.shape[0], t), cond)
    return np.asarray(getattr(out, "data", out), dtype=np.float64)


def euler_sample(net, x0, cond=None, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Integrate dx/dt = net(x, t, cond) from t=0 to 1 with ``steps`` Euler steps.

    ``x0`` is one F-vector or an N x F batch; the result has the same shape.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(x0, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
        if cond is not None:
            cond = np.asarray(cond, dtype=np.float64).reshape(1, -1)
    dt = 1.0 / steps
    for k in range(steps):
        x = x + dt * _velocity(net, x, k / steps, cond)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"Euler state became non-finite at step {k}", step=k)
    return x[0] if single else x


def fit(net: VectorFieldNet, sample_target, steps: int, gen: np.random.Generator,
        batch: int = 128, lr: float = 1e-2, cond=None) -> list:
    """Train ``net`` on draws from ``sample_target(gen, n)``; returns the loss trace.

    Small utility for toy targets; the full model trains in ``harness``.
    """
    opt = Adam(net.parameters(), lr=lr)
    trace = []
    for _ in range(steps):
        x1 = sample_target(gen, batch)
        x0 = gen.standard_normal(x1.shape)
        t = gen.uniform(0.0, 1.0, size=batch)
        loss = cfm_loss(net, x0, x1, t, cond)
        nc.backward(loss, net.parameters())
        opt.step()
        trace.append(loss.item())
    return trace
