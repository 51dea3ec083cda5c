"""Dense 2-D tensors with tape-based reverse-mode differentiation.

Operations record themselves onto the innermost active :class:`Tape` when
at least one operand requires a gradient. Without an active tape they are
plain numpy computations, which is what evaluation uses.

    with Tape() as tape:
        loss = sum_all(mul(w, w))
    tape.backward(loss)
"""

from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from .errors import ContractError, ShapeError
from .sparse import SparseMatrix

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    __slots__ = ("value", "requires_grad", "grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        arr = np.array(value, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
        self.value = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def numpy(self) -> np.ndarray:
        return self.value

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.full((1, 1), float(x)))


class _Node:
    __slots__ = ("inputs", "output", "backward")

    def __init__(self, inputs, output, backward):
        self.inputs = inputs
        self.output = output
        self.backward = backward


class Tape:
    """Ordered record of operations; replayed in reverse by :meth:`backward`."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> Tape:
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, inputs: Sequence[Tensor], output: Tensor, backward: Callable) -> None:
        self.nodes.append(_Node(tuple(inputs), output, backward))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(leaf) into ``grad`` of every reachable leaf."""
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a scalar (1x1) loss, got {loss.shape}")
        produced = {id(node.output) for node in self.nodes}
        grads: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
        leaves: dict[int, Tensor] = {}
        if id(loss) not in produced and loss.requires_grad:
            leaves[id(loss)] = loss
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue
            in_grads = node.backward(g_out)
            for t, g in zip(node.inputs, in_grads):
                if g is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if key not in produced:
                    leaves[key] = t
        for key, t in leaves.items():
            g = grads.get(key)
            if g is None:
                continue
            t.grad = g.copy() if t.grad is None else t.grad + g


def _result(value: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    tape = active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.value = value
    out.grad = None
    out.name = None
    out.requires_grad = needs
    if needs:
        tape.record(inputs, out, backward)
    return out


def constant(value) -> Tensor:
    return Tensor(value, requires_grad=False)


# -- broadcasting -----------------------------------------------------------

def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> tuple[int, int]:
    if a.shape == b.shape:
        return a.shape
    (ar, ac), (br, bc) = a.shape, b.shape
    # row vector or column vector against a matrix, in either order
    if ac == bc and (ar == 1 or br == 1):
        return (max(ar, br), ac)
    if ar == br and (ac == 1 or bc == 1):
        return (ar, max(ac, bc))
    raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


# -- elementwise ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "add")
    return _result(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "sub")
    return _result(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _result(av * bv, (a, b),
                   lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)))


def scale(a: Tensor, factor: float, shift: float = 0.0) -> Tensor:
    """factor * a + shift with python-float coefficients."""
    factor = float(factor)
    return _result(a.value * factor + shift, (a,), lambda g: (g * factor,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(a: Tensor) -> Tensor:
    y = _sigmoid(a.value)
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def log_sigmoid(a: Tensor) -> Tensor:
    x = a.value
    y = np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(x)
    return _result(y, (a,), lambda g: (g * (1.0 - s),))


def log(a: Tensor) -> Tensor:
    x = a.value
    if np.any(x <= 0):
        raise ContractError("log of a non-positive value")
    return _result(np.log(x), (a,), lambda g: (g / x,))


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; the gradient is zero where clipping is active."""
    x = a.value
    inside = (x >= lo) & (x <= hi)
    return _result(np.clip(x, lo, hi), (a,), lambda g: (g * inside,))


# -- linear algebra ---------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _result(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def sparse_matmul(s: SparseMatrix, d: Tensor) -> Tensor:
    """Constant sparse operator times a dense tensor; gradient flows into ``d`` only."""
    if s.cols != d.rows:
        raise ShapeError(f"sparse_matmul: inner dimensions differ, {s.shape} @ {d.shape}")
    return _result(s.dot_dense(d.value), (d,), lambda g: (s.T.dot_dense(g),))


def transpose(a: Tensor) -> Tensor:
    return _result(a.value.T.copy(), (a,), lambda g: (g.T,))


def concat_cols(a: Tensor, b: Tensor) -> Tensor:
    if a.rows != b.rows:
        raise ShapeError(f"concat_cols: row counts differ, {a.shape} and {b.shape}")
    k = a.cols
    return _result(np.hstack([a.value, b.value]), (a, b), lambda g: (g[:, :k], g[:, k:]))


def gather_rows(a: Tensor, index) -> Tensor:
    """Rows ``a[index]``; repeated indices accumulate in the backward pass."""
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("gather_rows expects a 1-D index")
    if idx.size and (idx.min() < 0 or idx.max() >= a.rows):
        raise ContractError(f"gather_rows: index out of range for {a.rows} rows")
    shape = a.shape

    def backward(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _result(a.value[idx], (a,), backward)


def permute_cols(a: Tensor, perm) -> Tensor:
    p = np.asarray(perm, dtype=np.int64)
    if sorted(p.tolist()) != list(range(a.cols)):
        raise ContractError("permute_cols needs a permutation of the columns")
    inverse = np.argsort(p)
    return _result(a.value[:, p], (a,), lambda g: (g[:, inverse],))


# -- reductions -------------------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    shape = a.shape
    return _result(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean_all(a: Tensor) -> Tensor:
    return scale(sum_all(a), 1.0 / a.value.size)


def row_sum(a: Tensor) -> Tensor:
    cols = a.cols
    return _result(a.value.sum(axis=1, keepdims=True), (a,), lambda g: (np.repeat(g, cols, axis=1),))


def softmax_rows(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=1, keepdims=True)),)

    return _result(y, (a,), backward)


def log_softmax_rows(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    y = np.exp(out)
    return _result(out, (a,), lambda g: (g - y * g.sum(axis=1, keepdims=True),))


def elementwise(op: str, *operands: Tensor) -> Tensor:
    """Dispatch by name: add, sub, mul (binary) or tanh, sigmoid (unary)."""
    binary = {"add": add, "sub": sub, "mul": mul}
    unary = {"tanh": tanh, "sigmoid": sigmoid}
    if op in binary:
        if len(operands) != 2:
            raise ContractError(f"{op} takes two operands")
        return binary[op](*operands)
    if op in unary:
        if len(operands) != 1:
            raise ContractError(f"{op} takes one operand")
        return unary[op](operands[0])
    raise ContractError(f"unknown elementwise op {op!r}")


def backward(loss: Tensor, tape: Tape) -> None:
    tape.backward(loss)
