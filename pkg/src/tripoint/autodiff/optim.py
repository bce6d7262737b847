"""Adaptive-moment (Adam) optimizer."""

from __future__ import annotations

import numpy as np

from ..errors import MissingGrad


class Adam:
    def __init__(self, params, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self, allow_missing: bool = False) -> None:
        """Update every parameter in place.

        A parameter without ``.grad`` is an error unless ``allow_missing``,
        in which case it is treated as having zero gradient.
        """
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                if not allow_missing:
                    raise MissingGrad(f"parameter {i} with shape {p.shape} has no gradient")
                g = np.zeros_like(p.data)
            self.m[i] = b1 * self.m[i] + (1 - b1) * g
            self.v[i] = b2 * self.v[i] + (1 - b2) * g * g
            update = self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            p.data = (p.data - update).astype(p.dtype)


def sgd_adam_step(params, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, state: dict | None = None) -> dict:
    """Functional form of one Adam step; moments live in ``state`` keyed by parameter id."""
    state = {} if state is None else state
    params = list(params)
    key = tuple(id(p) for p in params)
    opt = state.get(key)
    if opt is None:
        opt = state[key] = Adam(params, lr, betas, eps)
    opt.lr = lr
    opt.step()
    return state
