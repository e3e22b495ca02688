"""Momentum SGD."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch


class SGD:
    """velocity <- momentum * velocity + grad; param <- param - lr * velocity."""

    def __init__(self, learning_rate=0.01, momentum=0.9):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] = {}

    def step(self, net, grads: dict[str, np.ndarray]):
        params = net.parameters()
        for name, g in grads.items():
            if name not in params:
                raise ShapeMismatch(f"gradient for unknown parameter {name!r}")
            p = params[name]
            if g.shape != p.shape:
                raise ShapeMismatch(f"{name}: gradient {g.shape} vs parameter {p.shape}")
            v = self.velocity.get(name)
            if v is None:
                v = np.zeros_like(p)
            v = self.momentum * v + g
            self.velocity[name] = v.astype(p.dtype, copy=False)
            p -= p.dtype.type(self.learning_rate) * self.velocity[name]
        return net


def sgd_step(net, grads, learning_rate, momentum=0.0, optimizer: SGD | None = None):
    """Functional form; pass the same ``optimizer`` across calls to carry momentum."""
    opt = optimizer or SGD(learning_rate, momentum)
    opt.learning_rate = learning_rate
    opt.momentum = momentum
    return opt.step(net, grads)
