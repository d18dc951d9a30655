"""Dense float64 tensors with tape-based reverse-mode differentiation."""

from __future__ import annotations

import contextlib
from typing import Callable, Iterator, Optional, Sequence

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block (acting, targets, evaluation)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A float64 array that can record how it was computed.

    ``_backward`` receives the gradient flowing into this node and is responsible
    for accumulating into the parents' ``grad`` buffers.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: Sequence["Tensor"] = (),
        _backward: Optional[Callable[[np.ndarray], None]] = None,
    ) -> None:
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim > 4:
            raise ValueError(f"tensor order {arr.ndim} exceeds 4")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents = tuple(_parents)
        self._backward = _backward

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        """Propagate ``grad`` (ones for scalars) to every leaf that requires it."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _topological(self)
        self.accumulate(np.asarray(grad, dtype=np.float64))
        for node in reversed(order):
            if node._backward is None:
                continue
            g = node.grad
            if g is not None:
                node._backward(g)
            # interior buffers are not needed once propagated
            node.grad = None
            node._parents = ()
            node._backward = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"


class Parameter(Tensor):
    """Trainable leaf tensor.

    ``max_norm`` bounds the L2 norm of every slice along axis 0 (one filter per
    slice) after each optimizer step; ``weight_decay`` is the L2 coefficient.
    """

    __slots__ = ("name", "max_norm", "weight_decay")

    def __init__(self, data, name: str = "", max_norm: Optional[float] = None, weight_decay: float = 0.0):
        super().__init__(data, requires_grad=True)
        if max_norm is not None and max_norm <= 0:
            raise ValueError("max_norm must be positive")
        if weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")
        self.name = name
        self.max_norm = max_norm
        self.weight_decay = float(weight_decay)

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result, recording the graph edge only when it is needed."""
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)
    return Tensor(data)


def _topological(root: Tensor) -> list:
    order: list = []
    seen: set = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order
