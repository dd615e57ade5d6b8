"""Dense float64 tensors with reverse-mode differentiation.

Every op returns a new :class:`Tensor`. When any input requires a gradient
the result records its parents and a closure that pushes the output
gradient back to them. :func:`backward` replays those closures in reverse
creation order, so each node is visited exactly once and gradients of
nodes used several times accumulate additively.

Only what the sense models need is here: elementwise arithmetic with
numpy broadcasting, batched matmul, gathering, reductions, row softmax
with an optional validity mask, and inverted dropout.
"""

from __future__ import annotations

import contextlib
import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "Tensor",
    "tensor",
    "parameter",
    "no_grad",
    "add",
    "sub",
    "mul",
    "neg",
    "matmul",
    "concat",
    "stack",
    "reshape",
    "transpose",
    "getitem",
    "take",
    "embedding_lookup",
    "where",
    "tanh",
    "sigmoid",
    "exp",
    "log",
    "softmax_rows",
    "log_softmax_rows",
    "sum",
    "mean",
    "dropout",
    "backward",
]

_ids = itertools.count()
_grad_enabled = True


class ShapeError(ValueError):
    """Operand shapes are incompatible for an op."""


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_id", "op")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self._id = next(_ids)
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def _grad_buffer(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        return self.grad

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    __add__ = lambda self, other: add(self, other)  # noqa: E731
    __radd__ = lambda self, other: add(other, self)  # noqa: E731
    __sub__ = lambda self, other: sub(self, other)  # noqa: E731
    __rsub__ = lambda self, other: sub(other, self)  # noqa: E731
    __mul__ = lambda self, other: mul(self, other)  # noqa: E731
    __rmul__ = lambda self, other: mul(other, self)  # noqa: E731
    __matmul__ = lambda self, other: matmul(self, other)  # noqa: E731
    __neg__ = lambda self: neg(self)  # noqa: E731
    __getitem__ = lambda self, idx: getitem(self, idx)  # noqa: E731


def tensor(data) -> Tensor:
    """Constant (non-differentiable) tensor."""
    return Tensor(data)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


@contextlib.contextmanager
def no_grad():
    """Disable recording inside the block (inference)."""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data: np.ndarray, parents: Sequence[Tensor], op: str,
            backward_fn: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(data, op=op)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_check(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# -- elementwise arithmetic ---------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("add", a, b)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), "add", backward_fn)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("sub", a, b)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _result(a.data - b.data, (a, b), "sub", backward_fn)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_check("mul", a, b)

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), "mul", backward_fn)


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _result(-a.data, (a,), "neg", lambda g: a._accumulate(-g))


def matmul(a, b) -> Tensor:
    """Batched matrix product; both operands need at least two axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape))

    return _result(out, (a, b), "matmul", backward_fn)


# -- structural ---------------------------------------------------------------

def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: no inputs")
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in ts]}") from None
    ax = axis % out.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in ts])

    def backward_fn(g):
        for t, lo, hi in zip(ts, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[ax] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _result(out, ts, "concat", backward_fn)


def stack(tensors: Sequence, axis: int = 0) -> Tensor:
    ts = [_as_tensor(t) for t in tensors]
    try:
        out = np.stack([t.data for t in ts], axis=axis)
    except ValueError:
        raise ShapeError(f"stack: incompatible shapes {[t.shape for t in ts]}") from None

    def backward_fn(g):
        parts = np.moveaxis(g, axis, 0)
        for t, part in zip(ts, parts):
            if t.requires_grad:
                t._accumulate(part)

    return _result(out, ts, "stack", backward_fn)


def reshape(a, shape: Sequence[int]) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _result(out, (a,), "reshape", lambda g: a._accumulate(g.reshape(a.shape)))


def transpose(a, axes: Sequence[int] | None = None) -> Tensor:
    a = _as_tensor(a)
    axes = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.data, axes), (a,), "transpose",
                   lambda g: a._accumulate(np.transpose(g, inverse)))


def getitem(a, index) -> Tensor:
    """Basic (slice/integer) indexing; the gradient is scattered in place."""
    a = _as_tensor(a)

    def backward_fn(g):
        a._grad_buffer()[index] += g

    return _result(a.data[index], (a,), "getitem", backward_fn)


def take(a, indices) -> Tensor:
    """Gather rows of ``a`` along axis 0 (``a.data[indices]``), any index shape."""
    a = _as_tensor(a)
    idx = np.asarray(indices, dtype=np.intp)
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise ShapeError(f"take: index out of range for shape {a.shape}")

    def backward_fn(g):
        np.add.at(a._grad_buffer(), idx, g)

    return _result(a.data[idx], (a,), "take", backward_fn)


def embedding_lookup(table, indices) -> Tensor:
    """Rows of an embedding matrix for integer token ids."""
    table = _as_tensor(table)
    if table.ndim != 2:
        raise ShapeError(f"embedding_lookup: table must be 2-d, got {table.shape}")
    return take(table, indices)


def where(condition, a, b) -> Tensor:
    """Select ``a`` where ``condition`` holds, else ``b`` (condition is constant)."""
    a, b = _as_tensor(a), _as_tensor(b)
    cond = np.asarray(condition, dtype=bool)
    try:
        out = np.where(cond, a.data, b.data)
    except ValueError:
        raise ShapeError(f"where: incompatible shapes {a.shape} and {b.shape}") from None

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(np.where(cond, g, 0.0), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(np.where(cond, 0.0, g), b.shape))

    return _result(out, (a, b), "where", backward_fn)


# -- nonlinearities -------------------------------------------------------------

def tanh(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.data)
    return _result(out, (a,), "tanh", lambda g: a._accumulate(g * (1.0 - out * out)))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return _result(out, (a,), "sigmoid", lambda g: a._accumulate(g * out * (1.0 - out)))


def exp(a) -> Tensor:
    a = _as_tensor(a)
    with np.errstate(over="raise"):
        try:
            out = np.exp(a.data)
        except FloatingPointError:
            raise FloatingPointError("exp: overflow") from None
    return _result(out, (a,), "exp", lambda g: a._accumulate(g * out))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log: non-positive input")
    return _result(np.log(a.data), (a,), "log", lambda g: a._accumulate(g / a.data))


def _masked_logits(x: np.ndarray, mask) -> tuple[np.ndarray, np.ndarray | None]:
    if mask is None:
        return x, None
    m = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    if not m.any(axis=-1).all():
        raise ValueError("softmax_rows: a row has no valid entries")
    return np.where(m, x, -np.inf), m


def softmax_rows(a, mask=None) -> Tensor:
    """Softmax over the last axis; masked-out entries get probability exactly 0."""
    a = _as_tensor(a)
    x, m = _masked_logits(a.data, mask)
    z = np.exp(x - x.max(axis=-1, keepdims=True))
    out = z / z.sum(axis=-1, keepdims=True)

    def backward_fn(g):
        a._accumulate(out * (g - (g * out).sum(axis=-1, keepdims=True)))

    return _result(out, (a,), "softmax_rows", backward_fn)


def log_softmax_rows(a, mask=None) -> Tensor:
    """Log-softmax over the last axis; masked-out entries are set to 0."""
    a = _as_tensor(a)
    x, m = _masked_logits(a.data, mask)
    shifted = x - x.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    out = shifted - lse
    probs = np.exp(out)
    if m is not None:
        out = np.where(m, out, 0.0)

    def backward_fn(g):
        gg = g if m is None else np.where(m, g, 0.0)
        a._accumulate(gg - probs * gg.sum(axis=-1, keepdims=True))

    return _result(out, (a,), "log_softmax_rows", backward_fn)


# -- reductions -----------------------------------------------------------------

def sum(a, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(out, (a,), "sum", backward_fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g / count, a.shape))

    return _result(out, (a,), "mean", backward_fn)


def dropout(a, rate: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout. Identity when ``rate == 0`` or ``train`` is false."""
    a = _as_tensor(a)
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return a
    if rng is None:
        raise ValueError("dropout: a random generator is required at train time")
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return _result(a.data * keep, (a,), "dropout", lambda g: a._accumulate(g * keep))


# -- reverse pass ---------------------------------------------------------------

def _reachable(root: Tensor) -> list[Tensor]:
    seen: set[int] = set()
    order: list[Tensor] = []
    todo = [root]
    while todo:
        node = todo.pop()
        if node._id in seen:
            continue
        seen.add(node._id)
        order.append(node)
        todo.extend(p for p in node._parents if p.requires_grad)
    # creation order is a valid topological order of the graph
    order.sort(key=lambda t: t._id, reverse=True)
    return order


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every differentiable leaf feeding ``loss``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any parameter")
    loss.grad = np.ones_like(loss.data)
    for node in _reachable(loss):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # interior gradients are not needed once pushed to parents
            node.grad = None
            node._backward = None
            node._parents = ()


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None
