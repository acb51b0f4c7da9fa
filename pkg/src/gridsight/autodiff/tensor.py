"""Shaped arrays with reverse-mode differentiation.

A :class:`Tensor` produced by an op remembers its parents and a closure that
maps the upstream gradient to one gradient per parent. ``backward`` walks the
graph once, accumulates into leaf ``.grad`` and then consumes the graph.
"""

from __future__ import annotations

import numpy as np


class GraphConsumedError(RuntimeError):
    """Raised when differentiating through a graph that was already consumed."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float32):
        self.data = np.array(data, dtype=dtype) if dtype is not None else np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward = None
        self._consumed = False

    @classmethod
    def _from_op(cls, data, parents, backward) -> "Tensor":
        for p in parents:
            if p._consumed and p.requires_grad:
                raise GraphConsumedError("operand belongs to a graph that was already differentiated")
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.requires_grad = any(p.requires_grad for p in parents)
        out._consumed = False
        if out.requires_grad:
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None and not self._consumed

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=None)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # elementwise arithmetic: tensors of equal shape, or a Python scalar

    def __add__(self, other):
        if isinstance(other, Tensor):
            _same_shape(self, other)
            return Tensor._from_op(self.data + other.data, (self, other), lambda g: (g, g))
        c = float(other)
        return Tensor._from_op(self.data + self.data.dtype.type(c), (self,), lambda g: (g,))

    __radd__ = __add__

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Tensor):
            _same_shape(self, other)
            a, b = self.data, other.data
            return Tensor._from_op(a * b, (self, other), lambda g: (g * b, g * a))
        c = self.data.dtype.type(float(other))
        return Tensor._from_op(self.data * c, (self,), lambda g: (g * c,))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return self * (1.0 / float(other))

    def exp(self) -> "Tensor":
        e = np.exp(self.data)
        return Tensor._from_op(e, (self,), lambda g: (g * e,))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        return Tensor._from_op(self.data.reshape(shape), (self,), lambda g: (g.reshape(src),))

    def sum(self) -> "Tensor":
        src = self.data.shape
        dt = self.data.dtype
        return Tensor._from_op(
            np.asarray(self.data.sum(), dtype=dt), (self,), lambda g: (np.full(src, g, dtype=dt),)
        )

    def mean(self) -> "Tensor":
        return self.sum() * (1.0 / self.data.size)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError(f"backward needs a scalar, got shape {self.shape}")
        if self._consumed:
            raise GraphConsumedError("graph already consumed by a previous backward()")
        if not self.requires_grad:
            raise ValueError("tensor does not depend on any parameter")
        order = _topological(self)
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
        for node in order:
            if node._backward is not None:
                node._backward = None
                node._parents = ()
                node._consumed = True


def _same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
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
