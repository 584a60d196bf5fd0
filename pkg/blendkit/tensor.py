"""
Dense float64 tensors with reverse-mode automatic differentiation.

Every operation that has at least one input with ``requires_grad`` records a
TapeEntry on its output. ``backward`` traces those entries into a
ComputationTape (inputs before outputs) and replays the local backward rules in
reverse order, accumulating into the ``grad`` slot of every leaf that asked for
one.

Shapes are explicit: binary elementwise ops need equal shapes, with a single
exception for scalar-by-tensor (one operand of size 1). Gradients accumulate
until ``zero_grad`` is called.

Usage:
    w = Tensor(np.ones((2, 3)), requires_grad=True)
    x = Tensor(np.arange(6.0).reshape(3, 2))
    loss = total(tanh(matmul(w, x)))
    loss.backward()
    w.grad  # d loss / d w
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from blendkit.util.errors import DimensionError, InputError, NumericError, UsageError

DTYPE = np.float64

Scalar = Union[int, float]
Backward = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    """Disable tape recording in the current thread (inference, benchmarks)."""
    previous = _grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@dataclass(frozen=True)
class SliceGrad:
    """Gradient that is nonzero only on ``index`` of its input.

    Slicing ops return this instead of a full zero array so that many slices
    of one tensor accumulate into a single buffer during replay.
    """

    index: tuple
    values: np.ndarray


@dataclass(eq=False)
class TapeEntry:
    """One executed operation: its name, its inputs and its local backward rule."""

    op: str
    inputs: Tuple["Tensor", ...]
    backward: Backward


class Tensor:
    """Dense n-dimensional float64 array with an optional gradient slot.

    Attributes:
        data (np.ndarray): Row-major values, always float64 and at least 1-d.
        grad (np.ndarray): Accumulated gradient, same shape as data, or None.
        requires_grad (bool): Whether backward should produce a gradient here.
    """

    __slots__ = ("data", "grad", "requires_grad", "_entry")

    def __init__(self, data, requires_grad: bool = False) -> None:
        array = np.array(data, dtype=DTYPE)
        if array.ndim == 0:
            array = array.reshape(1)
        if any(dim <= 0 for dim in array.shape):
            raise DimensionError(f"Tensor dimensions must be positive, got shape {array.shape}")
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._entry: Optional[TapeEntry] = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._entry is None

    def item(self) -> float:
        if self.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __add__(self, other) -> "Tensor":
        return add(self, other)

    def __radd__(self, other) -> "Tensor":
        return add(other, self)

    def __sub__(self, other) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return mul(self, -1.0)

    def __matmul__(self, other) -> "Tensor":
        return matmul(self, other)


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def zero_grads(params: Iterable[Tensor]) -> None:
    for param in params:
        param.zero_grad()


def _wrap(data: np.ndarray) -> Tensor:
    # Results of recorded ops are fresh arrays; no copy needed
    out = Tensor.__new__(Tensor)
    out.data = np.asarray(data, dtype=DTYPE)
    if out.data.ndim == 0:
        out.data = out.data.reshape(1)
    out.grad = None
    out.requires_grad = False
    out._entry = None
    return out


def _record(op: str, data: np.ndarray, inputs: Sequence[Tensor], rule: Backward) -> Tensor:
    out = _wrap(data)
    if _grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._entry = TapeEntry(op, tuple(inputs), rule)
    return out


class ComputationTape:
    """Ordered record of the operations that produced a scalar output.

    ``entries`` lists every non-leaf tensor reachable from the output in
    execution-compatible (topological) order; ``replay`` walks it backwards.
    """

    def __init__(self, nodes: List[Tensor]) -> None:
        self.nodes = nodes

    @classmethod
    def trace(cls, output: Tensor) -> "ComputationTape":
        order: List[Tensor] = []
        visited = set()
        # Iterative post-order DFS; recurrent graphs are too deep for recursion
        stack: List[Tuple[Tensor, bool]] = [(output, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._entry is not None:
                for parent in node._entry.inputs:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    @property
    def entries(self) -> List[TapeEntry]:
        return [node._entry for node in self.nodes if node._entry is not None]

    def __len__(self) -> int:
        return len(self.entries)

    def replay(self, output: Tensor, seed: np.ndarray) -> None:
        pending: Dict[int, np.ndarray] = {id(output): seed}
        # Keys whose pending array was allocated here and may be updated in place
        owned = set()
        for node in reversed(self.nodes):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            if node._entry is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            input_grads = node._entry.backward(grad)
            for parent, parent_grad in zip(node._entry.inputs, input_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if isinstance(parent_grad, SliceGrad):
                    if key not in pending:
                        pending[key] = np.zeros(parent.shape, dtype=DTYPE)
                    elif key not in owned:
                        pending[key] = pending[key].copy()
                    owned.add(key)
                    pending[key][parent_grad.index] += parent_grad.values
                elif key in pending:
                    pending[key] = pending[key] + parent_grad
                    owned.add(key)
                else:
                    pending[key] = parent_grad


def backward(output: Tensor) -> None:
    """Accumulate d output / d leaf into every reachable leaf with requires_grad."""
    if output.size != 1:
        raise UsageError(f"backward() needs a scalar output, got shape {output.shape}")
    if not output.requires_grad:
        return
    tape = ComputationTape.trace(output)
    tape.replay(output, np.ones(output.shape, dtype=DTYPE))


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    # Scalar operand: every output element depended on it
    return np.full(shape, grad.sum(), dtype=DTYPE)


def _fill(data, shape: Tuple[int, ...]) -> np.ndarray:
    data = np.asarray(data, dtype=DTYPE)
    if data.shape == shape:
        return data
    return np.broadcast_to(data, shape).copy()


def _binary_operands(op: str, a, b) -> Tuple[Tensor, Tensor]:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")
    return a, b


def _result_shape(a: Tensor, b: Tensor) -> Tuple[int, ...]:
    if a.shape == b.shape:
        return a.shape
    return a.shape if b.size == 1 else b.shape


def _scalar_view(t: Tensor, shape: Tuple[int, ...]) -> np.ndarray:
    if t.shape == shape:
        return t.data
    return t.data.reshape(-1)[0]


def add(a, b) -> Tensor:
    a, b = _binary_operands("add", a, b)
    shape = _result_shape(a, b)
    data = _scalar_view(a, shape) + _scalar_view(b, shape)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record("add", _fill(data, shape), (a, b), rule)


def sub(a, b) -> Tensor:
    a, b = _binary_operands("sub", a, b)
    shape = _result_shape(a, b)
    data = _scalar_view(a, shape) - _scalar_view(b, shape)

    def rule(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record("sub", _fill(data, shape), (a, b), rule)


def mul(a, b) -> Tensor:
    a, b = _binary_operands("mul", a, b)
    shape = _result_shape(a, b)
    av, bv = _scalar_view(a, shape), _scalar_view(b, shape)
    data = av * bv

    def rule(g):
        return _unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)

    return _record("mul", _fill(data, shape), (a, b), rule)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    exp_x = np.exp(x[~positive])
    out[~positive] = exp_x / (1.0 + exp_x)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    s = _stable_sigmoid(x.data)

    def rule(g):
        return (g * s * (1.0 - s),)

    return _record("sigmoid", s, (x,), rule)


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)

    def rule(g):
        return (g * (1.0 - t * t),)

    return _record("tanh", t, (x,), rule)


def relu(x: Tensor) -> Tensor:
    x = as_tensor(x)
    active = x.data > 0

    def rule(g):
        return (g * active,)

    return _record("relu", np.where(active, x.data, 0.0), (x,), rule)


_ELEMENTWISE = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
}


def elementwise(op: str, *operands) -> Tensor:
    """Dispatch one of add, sub, mul, sigmoid, tanh, relu by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise UsageError(f"Unknown elementwise op '{op}', expected one of {sorted(_ELEMENTWISE)}")
    return fn(*operands)


# ---------------------------------------------------------------------------
# Linear algebra and shape ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    av, bv = a.data, b.data

    def rule(g):
        return g @ bv.T, av.T @ g

    return _record("matmul", av @ bv, (a, b), rule)


def transpose(x: Tensor) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"transpose: expected a matrix, got shape {x.shape}")

    def rule(g):
        return (g.T,)

    return _record("transpose", x.data.T.copy(), (x,), rule)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    shape = tuple(shape)
    if int(np.prod(shape)) != x.size:
        raise DimensionError(f"reshape: cannot view shape {x.shape} as {shape}")
    original = x.shape

    def rule(g):
        return (g.reshape(original),)

    return _record("reshape", x.data.reshape(shape).copy(), (x,), rule)


def bias_add(x: Tensor, bias: Tensor) -> Tensor:
    """Add a length-m bias to every row of an n x m matrix."""
    x, bias = as_tensor(x), as_tensor(bias)
    if x.data.ndim != 2 or bias.shape != (x.shape[1],):
        raise DimensionError(f"bias_add: shapes {x.shape} and {bias.shape} do not fit")

    def rule(g):
        return g, g.sum(axis=0)

    return _record("bias_add", x.data + bias.data, (x, bias), rule)


def narrow(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    """Slice ``start:stop`` along ``axis``."""
    x = as_tensor(x)
    if not 0 <= axis < x.data.ndim or not 0 <= start < stop <= x.shape[axis]:
        raise DimensionError(f"narrow: invalid slice {start}:{stop} on axis {axis} of shape {x.shape}")
    index = [slice(None)] * x.data.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def rule(g):
        return (SliceGrad(index, g),)

    return _record("narrow", x.data[index].copy(), (x,), rule)


def select(x: Tensor, axis: int, position: int) -> Tensor:
    """Take one position along ``axis``, dropping that axis."""
    x = as_tensor(x)
    sliced = narrow(x, axis, position, position + 1)
    shape = tuple(d for i, d in enumerate(x.shape) if i != axis) or (1,)
    return reshape(sliced, shape)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat: no tensors given")
    ndim = tensors[0].data.ndim
    if not 0 <= axis < ndim:
        raise DimensionError(f"concat: axis {axis} out of range for shape {tensors[0].shape}")
    for t in tensors[1:]:
        other_dims = [d for i, d in enumerate(t.shape) if i != axis]
        first_dims = [d for i, d in enumerate(tensors[0].shape) if i != axis]
        if t.data.ndim != ndim or other_dims != first_dims:
            raise DimensionError(
                f"concat: shapes {tensors[0].shape} and {t.shape} disagree off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    boundaries = np.cumsum(sizes)[:-1]

    def rule(g):
        return tuple(part.copy() for part in np.split(g, boundaries, axis=axis))

    return _record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, rule)


def max_over_axis(x: Tensor, axis: int, mask: Optional[np.ndarray] = None) -> Tensor:
    """Maximum along ``axis``; the axis is removed from the result shape.

    The gradient goes to a single position per reduced slice: the argmax, with
    ties resolved to the lowest index. ``mask`` (same shape as ``x``, boolean)
    restricts the maximum to the True positions.
    """
    x = as_tensor(x)
    if not 0 <= axis < x.data.ndim:
        raise DimensionError(f"max_over_axis: axis {axis} out of range for shape {x.shape}")
    values = x.data
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != x.shape:
            raise DimensionError(f"max_over_axis: mask shape {mask.shape} differs from {x.shape}")
        if not mask.any(axis=axis).all():
            raise DimensionError("max_over_axis: a reduced slice has no valid position")
        values = np.where(mask, values, -np.inf)
    # np.argmax returns the first occurrence of the maximum
    winners = np.expand_dims(np.argmax(values, axis=axis), axis)
    out = np.take_along_axis(x.data, winners, axis=axis)
    out_shape = tuple(d for i, d in enumerate(x.shape) if i != axis) or (1,)

    def rule(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        np.put_along_axis(full, winners, g.reshape(winners.shape), axis=axis)
        return (full,)

    return _record("max_over_axis", out.reshape(out_shape), (x,), rule)


def total(x: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    x = as_tensor(x)

    def rule(g):
        return (np.full(x.shape, g.reshape(-1)[0], dtype=DTYPE),)

    return _record("total", np.array([x.data.sum()]), (x,), rule)


def mean(x: Tensor) -> Tensor:
    x = as_tensor(x)
    return mul(total(x), 1.0 / x.size)


def row_sum(x: Tensor) -> Tensor:
    """Sum over the last axis of an n x k matrix, giving length n."""
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"row_sum: expected a matrix, got shape {x.shape}")

    def rule(g):
        return (np.repeat(g[:, None], x.shape[1], axis=1),)

    return _record("row_sum", x.data.sum(axis=1), (x,), rule)


def pick(x: Tensor, columns: np.ndarray) -> Tensor:
    """For an n x k matrix take x[i, columns[i]] for every row i."""
    x = as_tensor(x)
    columns = np.asarray(columns, dtype=np.int64)
    if x.data.ndim != 2 or columns.shape != (x.shape[0],):
        raise DimensionError(f"pick: shapes {x.shape} and {columns.shape} do not fit")
    if columns.min() < 0 or columns.max() >= x.shape[1]:
        raise InputError(f"pick: column index out of range for {x.shape[1]} columns")
    rows = np.arange(x.shape[0])

    def rule(g):
        full = np.zeros(x.shape, dtype=DTYPE)
        full[rows, columns] = g
        return (full,)

    return _record("pick", x.data[rows, columns].copy(), (x,), rule)


def gather_rows(table: Tensor, ids: np.ndarray, frozen_row: Optional[int] = None) -> Tensor:
    """Look up rows of ``table`` for an integer id array of any shape.

    The result has shape ``ids.shape + (table.shape[1],)``. The gradient for
    ``frozen_row`` (the padding row) is always dropped.
    """
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise DimensionError(f"gather_rows: expected a matrix table, got shape {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise InputError(
            f"token id out of range: ids span [{ids.min()}, {ids.max()}], vocabulary has {table.shape[0]} rows")

    def rule(g):
        full = np.zeros(table.shape, dtype=DTYPE)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        if frozen_row is not None:
            full[frozen_row] = 0.0
        return (full,)

    return _record("gather_rows", table.data[ids], (table,), rule)


def unfold(x: Tensor, width: int) -> Tensor:
    """Sliding windows over axis 1 of a batch x length x dim tensor.

    Returns batch x (length - width + 1) x (width * dim), each row being the
    concatenation of ``width`` consecutive time steps.
    """
    x = as_tensor(x)
    if x.data.ndim != 3:
        raise DimensionError(f"unfold: expected batch x length x dim, got shape {x.shape}")
    batch, length, dim = x.shape
    positions = length - width + 1
    if width < 1 or positions < 1:
        raise DimensionError(f"unfold: width {width} does not fit length {length}")
    windows = np.lib.stride_tricks.sliding_window_view(x.data, width, axis=1)
    # sliding_window_view puts the window axis last: batch x P x dim x width
    data = np.ascontiguousarray(windows.transpose(0, 1, 3, 2)).reshape(batch, positions, width * dim)

    def rule(g):
        g = g.reshape(batch, positions, width, dim)
        full = np.zeros(x.shape, dtype=DTYPE)
        for offset in range(width):
            full[:, offset:offset + positions, :] += g[:, :, offset, :]
        return (full,)

    return _record("unfold", data, (x,), rule)


# ---------------------------------------------------------------------------
# Normalisation
# ---------------------------------------------------------------------------

def _check_finite(op: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"{op}: input contains non-finite values")


def softmax(logits: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, computed with max subtraction."""
    logits = as_tensor(logits)
    _check_finite("softmax", logits.data)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=-1, keepdims=True)

    def rule(g):
        return (probs * (g - (g * probs).sum(axis=-1, keepdims=True)),)

    return _record("softmax", probs, (logits,), rule)


def log_softmax(logits: Tensor) -> Tensor:
    """Row-wise log-softmax via log-sum-exp; never takes log of a probability."""
    logits = as_tensor(logits)
    _check_finite("log_softmax", logits.data)
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - log_norm
    probs = np.exp(out)

    def rule(g):
        return (g - probs * g.sum(axis=-1, keepdims=True),)

    return _record("log_softmax", out, (logits,), rule)
