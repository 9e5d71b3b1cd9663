"""Dense float64 arithmetic with a small reverse-mode tape.

Every op accepts plain numpy arrays or tape ``Node`` objects. With plain
arrays the op just computes its value; as soon as one input is a ``Node`` the
op is recorded on that node's tape so ``backward`` can differentiate it.

Arrays may carry leading batch axes; matmul/transpose act on the last two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "ShapeError",
    "ContractError",
    "Tape",
    "Node",
    "as_matrix",
    "as_vector",
    "value_of",
    "matmul",
    "transpose",
    "relu",
    "add",
    "sub",
    "mul",
    "div",
    "sum",
    "mean",
    "amax",
    "where",
    "softmax_cross_entropy",
    "dense_layer",
    "reshape",
    "backward",
    "numerical_gradient",
    "relative_error",
]


class ShapeError(ValueError):
    """Operand shapes do not conform."""


class ContractError(ValueError):
    """A documented precondition was violated."""


def as_matrix(data) -> np.ndarray:
    a = np.array(data, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    return a


def as_vector(data) -> np.ndarray:
    a = np.array(data, dtype=np.float64)
    if a.ndim != 1 or a.shape[0] < 1:
        raise ShapeError(f"expected a non-empty 1-D vector, got shape {a.shape}")
    return a


@dataclass
class _Record:
    op: str
    inputs: tuple  # node id (int) or ("const", array)
    out: int
    fwd: Callable
    vjp: Callable


@dataclass
class Tape:
    """Ordered log of primitive ops; node ids increase in creation order."""

    values: list = field(default_factory=list)
    records: list = field(default_factory=list)
    leaves: dict = field(default_factory=dict)  # id -> requires_grad

    def leaf(self, value, requires_grad: bool = True) -> "Node":
        node = self._new(np.asarray(value, dtype=np.float64))
        self.leaves[node.id] = requires_grad
        return node

    def constant(self, value) -> "Node":
        return self.leaf(value, requires_grad=False)

    def _new(self, value: np.ndarray) -> "Node":
        self.values.append(value)
        return Node(self, len(self.values) - 1)

    def replay(self) -> list:
        """Recompute every recorded value from the leaves."""
        vals = [None] * len(self.values)
        for i in self.leaves:
            vals[i] = self.values[i]
        for rec in self.records:
            args = [vals[x] if isinstance(x, int) else x[1] for x in rec.inputs]
            vals[rec.out] = rec.fwd(*args)
        return vals


class Node:
    __slots__ = ("tape", "id")
    __array_priority__ = 1000  # make ndarray <op> Node defer to Node

    def __init__(self, tape: Tape, id: int):
        self.tape = tape
        self.id = id

    @property
    def value(self) -> np.ndarray:
        return self.tape.values[self.id]

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def T(self) -> "Node":
        return transpose(self)

    def __repr__(self) -> str:
        return f"Node(id={self.id}, shape={self.shape})"

    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __matmul__(self, o):
        return matmul(self, o)

    def __rmatmul__(self, o):
        return matmul(o, self)

    def __neg__(self):
        return mul(self, -1.0)


def value_of(x) -> np.ndarray:
    if type(x) is np.ndarray:
        return x
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _apply(op: str, fwd: Callable, vjp: Callable, *inputs):
    tape = None
    for x in inputs:
        if type(x) is Node:
            tape = x.tape
            break
    vals = [value_of(x) for x in inputs]
    out = fwd(*vals)
    if tape is None:
        return out
    if any(type(x) is Node and x.tape is not tape for x in inputs):
        raise ContractError(f"{op}: operands live on different tapes")
    node = tape._new(out)
    ins = tuple(x.id if type(x) is Node else ("const", v) for x, v in zip(inputs, vals))
    tape.records.append(_Record(op, ins, node.id, fwd, vjp))
    return node


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that were broadcast in the forward op
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _swap(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------- primitives


def _matmul_fwd(a, b):
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def _matmul_vjp(g, out, a, b):
    return _unbroadcast(g @ _swap(b), a.shape), _unbroadcast(_swap(a) @ g, b.shape)


def matmul(a, b):
    return _apply("matmul", _matmul_fwd, _matmul_vjp, a, b)


def _transpose_fwd(a):
    if a.ndim < 2:
        raise ShapeError(f"transpose: need at least 2 axes, got {a.shape}")
    return _swap(a).copy()


def transpose(a):
    return _apply("transpose", _transpose_fwd, lambda g, out, a: (_swap(g),), a)


def relu(a):
    # subgradient at exactly 0 is 0
    return _apply(
        "relu",
        lambda a: np.maximum(a, 0.0),
        lambda g, out, a: (g * (a > 0.0),),
        a,
    )


def add(a, b):
    return _apply(
        "add",
        lambda a, b: a + b,
        lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
        a,
        b,
    )


def sub(a, b):
    return _apply(
        "sub",
        lambda a, b: a - b,
        lambda g, out, a, b: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
        a,
        b,
    )


def mul(a, b):
    return _apply(
        "mul",
        lambda a, b: a * b,
        lambda g, out, a, b: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)),
        a,
        b,
    )


def div(a, b):
    return _apply(
        "div",
        lambda a, b: a / b,
        lambda g, out, a, b: (
            _unbroadcast(g / b, a.shape),
            _unbroadcast(-g * a / (b * b), b.shape),
        ),
        a,
        b,
    )


def sum(a, axis=None, keepdims: bool = False):  # noqa: A001 - mirrors numpy
    def vjp(g, out, a):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _apply("sum", lambda a: np.sum(a, axis=axis, keepdims=keepdims), vjp, a)


def mean(a, axis=None, keepdims: bool = False):
    def count(a):
        return a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])

    def vjp(g, out, a):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count(a), a.shape).copy(),)

    return _apply("mean", lambda a: np.mean(a, axis=axis, keepdims=keepdims), vjp, a)


def amax(a, axis: int):
    """Maximum along one axis; gradient goes to the first maximal entry."""

    def vjp(g, out, a):
        idx = np.expand_dims(np.argmax(a, axis=axis), axis)
        grad = np.zeros_like(a)
        np.put_along_axis(grad, idx, np.expand_dims(g, axis), axis=axis)
        return (grad,)

    return _apply("amax", lambda a: np.max(a, axis=axis), vjp, a)


def where(mask: np.ndarray, fill, x):
    """``fill`` where mask is true, else ``x``; gradient only reaches ``x``."""
    mask = np.asarray(mask, dtype=bool)
    fill = np.asarray(fill, dtype=np.float64)
    return _apply(
        "where",
        lambda x: np.where(mask, fill, x),
        lambda g, out, x: (_unbroadcast(np.where(mask, 0.0, g), x.shape),),
        x,
    )


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    # the max term contributes exactly 1; log1p over the rest keeps tiny losses accurate
    e = np.exp(shifted)
    np.put_along_axis(e, np.argmax(z, axis=-1)[..., None], 0.0, axis=-1)
    return shifted - np.log1p(e.sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """-log softmax(logits)[label] along the last axis.

    A 1-D logit vector with an int label gives a scalar; a (B, K) batch with
    B labels gives B losses.
    """
    labels = np.asarray(labels, dtype=np.int64)
    k = value_of(logits).shape[-1]
    if np.any(labels < 0) or np.any(labels >= k):
        raise ContractError(f"label out of range for {k} classes: {labels.tolist()}")

    def fwd(z):
        if z.shape[:-1] != labels.shape:
            raise ShapeError(f"cross entropy: logits {z.shape} vs labels {labels.shape}")
        logp = _log_softmax(z)
        return -np.take_along_axis(logp, labels[..., None], axis=-1)[..., 0]

    def vjp(g, out, z):
        p = np.exp(_log_softmax(z))
        np.put_along_axis(p, labels[..., None], np.take_along_axis(p, labels[..., None], -1) - 1.0, -1)
        return (p * np.asarray(g)[..., None],)

    return _apply("softmax_cross_entropy", fwd, vjp, logits)


def dense_layer(x, weights, bias, activation: str = "identity"):
    """activation(weights @ x + bias); ``x`` may be a vector or a batch of rows."""
    xs, ws, bs = value_of(x).shape, value_of(weights).shape, value_of(bias).shape
    if len(ws) != 2 or xs[-1] != ws[1] or bs != (ws[0],):
        raise ShapeError(f"dense_layer: x {xs}, weights {ws}, bias {bs}")
    if len(xs) == 1:
        y = add(matmul(weights, _column(x)), _column(bias))
        y = _flatten(y)
    else:
        y = add(matmul(x, transpose(weights)), bias)
    if activation == "relu":
        return relu(y)
    if activation != "identity":
        raise ValueError(f"unknown activation {activation!r}")
    return y


def reshape(a, shape):
    return _apply("reshape", lambda a: a.reshape(shape), lambda g, out, a: (g.reshape(a.shape),), a)


def _column(v):
    return reshape(v, (-1, 1))


def _flatten(v):
    return reshape(v, (-1,))


# ------------------------------------------------------------------ backward


def backward(tape: Tape, loss: Node) -> dict[int, np.ndarray]:
    """Gradients of a scalar node w.r.t. every trainable leaf.

    Leaves that do not influence the loss get a zero gradient.
    """
    if not isinstance(loss, Node) or loss.tape is not tape:
        raise ContractError("loss must be a node on the given tape")
    if loss.value.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.value)}
    for rec in reversed(tape.records):
        if rec.out not in grads:
            continue
        g = grads.pop(rec.out)
        args = [tape.values[x] if isinstance(x, int) else x[1] for x in rec.inputs]
        for x, gx in zip(rec.inputs, rec.vjp(g, tape.values[rec.out], *args)):
            if isinstance(x, int) and gx is not None:
                grads[x] = grads[x] + gx if x in grads else gx
    return {
        i: grads.get(i, np.zeros_like(tape.values[i]))
        for i, trainable in tape.leaves.items()
        if trainable
    }


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    """||a - b|| / max(||a||, ||b||, floor)."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))

