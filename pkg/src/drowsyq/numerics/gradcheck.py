"""Central finite-difference checks of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor)."""
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def numeric_grad(f: Callable[[], float], x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. the array ``x``, perturbed in place."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + step
        up = f()
        x[i] = orig - step
        down = f()
        x[i] = orig
        g[i] = (up - down) / (2.0 * step)
    return g


def check_gradients(
    fn: Callable[[], Tensor], inputs: Sequence[Tensor], step: float = 1e-5, seed: int = 0, floor: float = 1e-6
) -> float:
    """Max relative error over ``inputs`` for the scalar ``sum(fn() * R)``.

    ``R`` is a fixed random projection so that every output element carries
    a distinct weight. Returns the worst relative error found.
    """
    out = fn()
    proj = np.random.default_rng(seed).standard_normal(out.shape)

    def scalar() -> float:
        return float(np.sum(fn().data * proj))

    for t in inputs:
        t.grad = None
    fn().backward(proj)
    worst = 0.0
    for t in inputs:
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        numeric = numeric_grad(scalar, t.data, step)
        worst = max(worst, relative_error(analytic, numeric, floor))
    return worst
