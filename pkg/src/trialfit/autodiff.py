"""Reverse-mode automatic differentiation over small dense float64 tensors.

Values are computed eagerly and every result remembers the operation and
inputs that produced it. :func:`backward` walks that tape in reverse creation
order, which is always a valid topological order because a node can only be
built from nodes that already exist.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

__all__ = [
    "Tensor",
    "Parameter",
    "make_tensor",
    "tensor",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "neg",
    "relu",
    "sigmoid",
    "tanh",
    "exp",
    "log",
    "clip",
    "sum",
    "mean",
    "norm2",
    "concat",
    "reshape",
    "detach",
    "backward",
    "zero_grad",
    "no_grad",
    "is_grad_enabled",
]

_ids = itertools.count()
_ids_lock = threading.Lock()
_grad_mode = threading.local()


def _next_id() -> int:
    with _ids_lock:
        return next(_ids)


def is_grad_enabled() -> bool:
    return getattr(_grad_mode, "enabled", True)


@contextmanager
def no_grad():
    """Build no graph inside the block; results are constants."""
    previous = is_grad_enabled()
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = previous


class Tensor:
    """A float64 array that records how it was computed."""

    __array_priority__ = 1000

    def __init__(self, value, requires_grad: bool = False, parents: Sequence["Tensor"] = (), op: Optional[str] = None,
                 backward_fn: Optional[Callable] = None):
        self.value = np.array(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.parents = tuple(parents)
        self.op = op
        self._backward_fn = backward_fn
        self.node_id = _next_id()

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def is_leaf(self) -> bool:
        return self.op is None

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.value.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.value.copy()

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.value!r}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __neg__(self):
        return neg(self)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def tanh(self):
        return tanh(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def clip(self, low, high):
        return clip(self, low, high)

    def sum(self, axis=None):
        return sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def norm(self, p=2):
        return norm2(self, p)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def detach(self):
        return detach(self)

    def backward(self):
        backward(self)

    def zero_grad(self):
        self.grad = None


class Parameter(Tensor):
    """A trainable leaf tensor with a human-readable name."""

    def __init__(self, value, name: str = ""):
        super().__init__(value, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def make_tensor(data, shape, requires_grad: bool = False) -> Tensor:
    """Build a leaf tensor from flat ``data`` laid out row-major in ``shape``."""
    flat = np.asarray(data, dtype=np.float64).reshape(-1)
    shape = tuple(int(d) for d in shape)
    if any(d < 0 for d in shape):
        raise ShapeError(f"make_tensor: negative extent in shape {shape}")
    expected = int(np.prod(shape, dtype=np.int64))
    if flat.size != expected:
        raise ShapeError(f"make_tensor: {flat.size} values do not fill shape {shape} ({expected} elements)")
    return Tensor(flat.reshape(shape), requires_grad=requires_grad)


def tensor(value, requires_grad: bool = False) -> Tensor:
    """Wrap array-like ``value`` as a leaf tensor, passing tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=requires_grad)


def _result(value, parents, op, backward_fn) -> Tensor:
    needs = is_grad_enabled() and any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(value, requires_grad=False)
    return Tensor(value, requires_grad=True, parents=parents, op=op, backward_fn=backward_fn)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    # only scalar-with-tensor broadcasting exists, so the target is rank 0
    return np.asarray(grad.sum()).reshape(shape)


def _elementwise_shapes(op: str, a: Tensor, b: Tensor):
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not match")


def add(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _elementwise_shapes("add", a, b)

    def grads(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.value + b.value, (a, b), "add", grads)


def sub(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _elementwise_shapes("sub", a, b)

    def grads(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.value - b.value, (a, b), "sub", grads)


def mul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _elementwise_shapes("mul", a, b)

    def grads(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)

    return _result(a.value * b.value, (a, b), "mul", grads)


def div(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    _elementwise_shapes("div", a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = a.value / b.value

    def grads(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (_unbroadcast(g / b.value, a.shape),
                    _unbroadcast(-g * a.value / (b.value * b.value), b.shape))

    return _result(out, (a, b), "div", grads)


def matmul(a, b) -> Tensor:
    a, b = tensor(a), tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

    def grads(g):
        return g @ b.value.T, a.value.T @ g

    return _result(a.value @ b.value, (a, b), "matmul", grads)


def neg(x) -> Tensor:
    x = tensor(x)
    return _result(-x.value, (x,), "neg", lambda g: (-g,))


def relu(x) -> Tensor:
    x = tensor(x)
    # subgradient at exactly 0 is 0
    mask = (x.value > 0).astype(np.float64)
    return _result(x.value * mask, (x,), "relu", lambda g: (g * mask,))


def sigmoid(x) -> Tensor:
    x = tensor(x)
    out = 0.5 * (1.0 + np.tanh(0.5 * x.value))
    return _result(out, (x,), "sigmoid", lambda g: (g * out * (1.0 - out),))


def tanh(x) -> Tensor:
    x = tensor(x)
    out = np.tanh(x.value)
    return _result(out, (x,), "tanh", lambda g: (g * (1.0 - out * out),))


def exp(x) -> Tensor:
    x = tensor(x)
    with np.errstate(over="ignore"):
        out = np.exp(x.value)
    return _result(out, (x,), "exp", lambda g: (g * out,))


def log(x) -> Tensor:
    x = tensor(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x.value)

    def grads(g):
        with np.errstate(divide="ignore", invalid="ignore"):
            return (g / x.value,)

    return _result(out, (x,), "log", grads)


def clip(x, low: float, high: float) -> Tensor:
    """Clamp into ``[low, high]``; gradient passes where the input is inside, bounds included."""
    x = tensor(x)
    mask = ((x.value >= low) & (x.value <= high)).astype(np.float64)
    return _result(np.clip(x.value, low, high), (x,), "clip", lambda g: (g * mask,))


def sum(x, axis: Optional[int] = None) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = tensor(x)
    if axis is None:
        return _result(x.value.sum(), (x,), "sum", lambda g: (np.broadcast_to(g, x.shape).copy(),))
    axis = _check_axis("sum", x, axis)

    def grads(g):
        return (np.broadcast_to(np.expand_dims(g, axis), x.shape).copy(),)

    return _result(x.value.sum(axis=axis), (x,), "sum", grads)


def mean(x, axis: Optional[int] = None) -> Tensor:
    x = tensor(x)
    if axis is None:
        n = x.size
        return _result(x.value.mean() if n else np.nan, (x,), "mean",
                       lambda g: (np.broadcast_to(g / n, x.shape).copy(),))
    axis = _check_axis("mean", x, axis)
    n = x.shape[axis]

    def grads(g):
        return (np.broadcast_to(np.expand_dims(g / n, axis), x.shape).copy(),)

    return _result(x.value.mean(axis=axis), (x,), "mean", grads)


def _check_axis(op: str, x: Tensor, axis: int) -> int:
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"{op}: axis {axis} out of range for shape {x.shape}")
    return axis % x.ndim


def norm2(x, p: int = 2) -> Tensor:
    """Euclidean norm over all elements. The zero tensor has norm 0 and gradient 0."""
    if p != 2:
        raise ContractError(f"norm2: only p=2 is supported, got p={p}")
    x = tensor(x)
    out = float(np.sqrt(np.sum(x.value * x.value)))

    def grads(g):
        if out == 0.0:
            return (np.zeros_like(x.value),)
        return (g * x.value / out,)

    return _result(out, (x,), "norm2", grads)


def concat(tensors: Sequence, axis: int = 0) -> Tensor:
    parts = [tensor(t) for t in tensors]
    if not parts:
        raise ContractError("concat: needs at least one tensor")
    ndim = parts[0].ndim
    if ndim == 0:
        raise ShapeError("concat: cannot concatenate rank-0 tensors")
    axis = _check_axis("concat", parts[0], axis)
    for p in parts[1:]:
        if p.ndim != ndim or any(p.shape[i] != parts[0].shape[i] for i in range(ndim) if i != axis):
            raise ShapeError(f"concat: shapes {parts[0].shape} and {p.shape} do not conform on axis {axis}")
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def grads(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _result(np.concatenate([p.value for p in parts], axis=axis), tuple(parts), "concat", grads)


def reshape(x, shape: Iterable[int]) -> Tensor:
    x = tensor(x)
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape, dtype=np.int64)) != x.size or any(d < 0 for d in shape):
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {shape}")
    return _result(x.value.reshape(shape), (x,), "reshape", lambda g: (g.reshape(x.shape),))


def detach(x) -> Tensor:
    """A constant leaf with the same value; no gradient ever reaches ``x`` through it."""
    x = tensor(x)
    out = Tensor.__new__(Tensor)
    out.value = x.value
    out.grad = None
    out.requires_grad = False
    out.parents = ()
    out.op = None
    out._backward_fn = None
    out.node_id = _next_id()
    return out


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node that requires grad."""
    if not isinstance(loss, Tensor) or loss.size != 1:
        shape = loss.shape if isinstance(loss, Tensor) else type(loss).__name__
        raise ContractError(f"backward needs a single-element loss, got {shape}")
    if not loss.requires_grad:
        return

    nodes = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node.node_id in nodes:
            continue
        nodes[node.node_id] = node
        stack.extend(p for p in node.parents if p.requires_grad)

    pending = {loss.node_id: np.ones_like(loss.value)}
    for node_id in sorted(nodes, reverse=True):
        node = nodes[node_id]
        g = pending.pop(node_id, None)
        if g is None:
            continue
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._backward_fn is None:
            continue
        for parent, pg in zip(node.parents, node._backward_fn(g)):
            if not parent.requires_grad:
                continue
            prev = pending.get(parent.node_id)
            pending[parent.node_id] = pg if prev is None else prev + pg


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
