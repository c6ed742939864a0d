"""
Dense tensor with reverse-mode automatic differentiation.

Each differentiable operation records its parents and a backward closure that
maps the output gradient to one gradient per parent. ``Tensor.backward`` walks
the recorded graph in reverse topological order and accumulates gradients into
leaf tensors.

The graph is recorded per thread; ``no_grad()`` suspends recording for
inference and ``precision(np.float64)`` switches the working dtype, which the
gradient checker uses for its finite-difference oracle.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from octfluid.helpers.errors import AxisError, NumericalError, ShapeError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence]


class _State(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.dtype = np.float32
        self.detect_anomaly = False


_state = _State()


# =============================================================================
# Engine switches
# =============================================================================


@contextmanager
def no_grad():
    """Run a block without recording operations."""
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def precision(dtype):
    """Temporarily change the dtype new tensors are created with."""
    previous = _state.dtype
    _state.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _state.dtype = previous


@contextmanager
def detect_anomaly():
    """Raise ``NumericalError`` as soon as an op produces a non-finite value."""
    previous = _state.detect_anomaly
    _state.detect_anomaly = True
    try:
        yield
    finally:
        _state.detect_anomaly = previous


def is_grad_enabled() -> bool:
    return _state.grad_enabled


def default_dtype():
    return _state.dtype


# =============================================================================
# Tensor
# =============================================================================


class Tensor:
    """N-dimensional array with optional gradient tracking.

    Attributes:
        data: the value buffer (float32 unless inside ``precision``)
        requires_grad: whether gradients flow to this tensor
        grad: accumulated gradient, same shape as ``data`` (leaves only)
    """

    __array_priority__ = 100

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=_state.dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]] = None
        self._op = ""

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __len__(self):
        return self.shape[0]

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # ---------------------------------------------------------------- backward

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """Back-propagate from this tensor; scalars default to a unit seed."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs an explicit gradient for shape {self.shape}")
            grad = np.ones_like(self.data)
        grad = np.asarray(grad, dtype=self.data.dtype)
        if grad.shape != self.shape:
            raise ShapeError(f"gradient shape {grad.shape} != tensor shape {self.shape}")

        order = _topological_order(self)
        grads = {id(self): grad}
        for node in reversed(order):
            node_grad = grads.pop(id(node), None)
            if node_grad is None:
                continue
            if node._backward is None:
                if node.requires_grad:
                    node.grad = node_grad.copy() if node.grad is None else node.grad + node_grad
                continue
            parent_grads = node._backward(node_grad)
            for parent, parent_grad in zip(node._parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad
            # free the graph as we go
            node._parents = ()
            node._backward = None

    # --------------------------------------------------------------- operators

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)


def _topological_order(root: Tensor) -> List[Tensor]:
    # iterative DFS: deep networks overflow the recursion limit
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def make_node(
    data: np.ndarray,
    parents: Iterable[Tensor],
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]],
    op: str = "",
) -> Tensor:
    """Wrap an op result and record it on the tape when any parent needs grads."""
    parents = tuple(parents)
    if _state.detect_anomaly and not np.all(np.isfinite(data)):
        raise NumericalError(f"non-finite output from '{op}' (shape {np.shape(data)})")
    requires = _state.grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=requires)
    if requires:
        out._parents = parents
        out._backward = backward
        out._op = op
    return out


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _normalize_axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise AxisError(f"axis {axis} is out of range for a {ndim}-d tensor")
    return axis % ndim


# =============================================================================
# Elementwise arithmetic
# =============================================================================


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_node(out, (a, b), backward, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_node(out, (a, b), backward, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make_node(out, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_node(out, (a, b), backward, "div")


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1),)

    return make_node(out, (a,), backward, "pow")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)

    def backward(g):
        return (g * out,)

    return make_node(out, (a,), backward, "exp")


def log(a: Tensor) -> Tensor:
    out = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return make_node(out, (a,), backward, "log")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def backward(g):
        return (g * (1.0 - out * out),)

    return make_node(out, (a,), backward, "tanh")


# =============================================================================
# Reductions and linear algebra
# =============================================================================


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is not None:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        axes = tuple(_normalize_axis(ax, a.ndim) for ax in axes)
    else:
        axes = tuple(range(a.ndim))
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make_node(out, (a,), backward, "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    total = tsum(a, axis=axis, keepdims=keepdims)
    count = a.size // max(total.size, 1)
    return mul(total, 1.0 / count)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >= 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return make_node(out, (a, b), backward, "matmul")


# =============================================================================
# Shape manipulation
# =============================================================================


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {a.shape} into {tuple(shape)}")

    def backward(g):
        return (g.reshape(a.shape),)

    return make_node(out, (a,), backward, "reshape")


def transpose(a: Tensor, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    if sorted(axes) != list(range(a.ndim)):
        raise AxisError(f"invalid permutation {axes} for a {a.ndim}-d tensor")
    out = np.transpose(a.data, axes)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        return (np.transpose(g, inverse),)

    return make_node(out, (a,), backward, "transpose")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = _normalize_axis(axis, tensors[0].ndim)
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != axis
        ):
            raise ShapeError(f"cannot concatenate {tensors[0].shape} with {t.shape} on axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        parts = []
        for start, stop in zip(bounds[:-1], bounds[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            parts.append(g[tuple(index)])
        return tuple(parts)

    return make_node(out, tensors, backward, "concat")


def pad(a: Tensor, widths: Sequence[Tuple[int, int]], mode: str = "constant") -> Tensor:
    """Zero (``constant``) or ``edge`` padding; ``widths`` is one pair per axis."""
    widths = [tuple(w) for w in widths]
    if len(widths) != a.ndim:
        raise ShapeError(f"pad widths {widths} do not match a {a.ndim}-d tensor")
    if all(w == (0, 0) for w in widths):
        return a
    out = np.pad(a.data, widths, mode=mode)
    crop = tuple(slice(lo, lo + size) for (lo, _), size in zip(widths, a.shape))

    def backward(g):
        if mode == "constant":
            return (g[crop].copy(),)
        # edge replication folds border gradients back onto the edge voxels
        grad = g
        for axis, (lo, hi) in enumerate(widths):
            if lo == 0 and hi == 0:
                continue
            size = a.shape[axis]
            moved = np.moveaxis(grad, axis, 0)
            core = moved[lo:lo + size].copy()
            core[0] += moved[:lo].sum(axis=0)
            core[-1] += moved[lo + size:].sum(axis=0)
            grad = np.moveaxis(core, 0, axis)
        return (grad,)

    return make_node(out, (a,), backward, "pad")


def roll(a: Tensor, shifts: Sequence[int], axes: Sequence[int]) -> Tensor:
    shifts, axes = tuple(shifts), tuple(axes)
    if not any(shifts):
        return a
    out = np.roll(a.data, shifts, axis=axes)

    def backward(g):
        return (np.roll(g, tuple(-s for s in shifts), axis=axes),)

    return make_node(out, (a,), backward, "roll")


def _is_basic_index(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def getitem(a: Tensor, index) -> Tensor:
    out = a.data[index]
    basic = _is_basic_index(index)

    def backward(g):
        grad = np.zeros_like(a.data)
        if basic:
            grad[index] = g
        else:
            np.add.at(grad, index, g)
        return (grad,)

    return make_node(np.array(out, copy=True), (a,), backward, "getitem")


def take(table: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows ``table[indices]`` (first axis) with scatter-add backward."""
    indices = np.asarray(indices, dtype=np.int64)
    out = table.data[indices]

    def backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, indices.reshape(-1), g.reshape((-1,) + table.shape[1:]))
        return (grad,)

    return make_node(out, (table,), backward, "take")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in map(as_tensor, tensors)]
    return concat(expanded, axis=axis)
