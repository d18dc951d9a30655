"""RMSProp with L2 decay and per-filter max-norm projection."""

from __future__ import annotations

from typing import Dict, Iterable, List

import numpy as np

from . import kernels
from .tensor import Parameter


def clip_max_norm(p: Parameter) -> None:
    """Rescale every axis-0 slice of ``p`` whose L2 norm exceeds ``p.max_norm``."""
    if p.max_norm is None:
        return
    flat = p.data.reshape(p.data.shape[0], -1)
    norms = np.sqrt(np.sum(flat * flat, axis=1))
    scale = np.where(norms > p.max_norm, p.max_norm / np.maximum(norms, 1e-300), 1.0)
    p.data *= scale.reshape((-1,) + (1,) * (p.data.ndim - 1))


class RMSProp:
    """``sq <- rho*sq + (1-rho)*g^2``; ``p <- p - lr*g/(sqrt(sq)+eps)``.

    The L2 term ``weight_decay * p`` is added to each gradient before the
    update and the max-norm projection runs after it.
    """

    def __init__(self, params: Iterable[Parameter], lr: float = 2.5e-4, rho: float = 0.95, eps: float = 1e-6):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        self.params: List[Parameter] = list(params)
        self.lr = float(lr)
        self.rho = float(rho)
        self.eps = float(eps)
        self.sq: Dict[int, np.ndarray] = {id(p): np.zeros_like(p.data) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        for p in self.params:
            if p.grad is None:
                raise RuntimeError(f"missing gradient for parameter {p.name or p.shape}")
        for p in self.params:
            kernels.rmsprop_update(p.data, p.grad, self.sq[id(p)], self.lr, self.rho, self.eps, p.weight_decay)
            clip_max_norm(p)
