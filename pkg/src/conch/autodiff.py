"""Minimal dense-tensor reverse-mode automatic differentiation.

Tensors wrap float64 numpy arrays and record the operations that produced
them; :func:`backward` replays the graph in reverse topological order and
accumulates exact gradients. Every op validates that its output is finite:
a NaN/Inf anywhere in a forward pass raises :class:`NonFiniteError` rather
than propagating silently.

A computation graph belongs to one thread. Graphs are single-use: build a
fresh forward pass per step and call :func:`backward` once on its loss.
"""

from __future__ import annotations

import numpy as np


class NonFiniteError(RuntimeError):
    """A forward computation produced NaN or Inf."""


def _ensure_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """A float64 array with optional gradient and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_called")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        # list of (parent tensor, fn mapping output grad -> parent grad contribution)
        self._parents: list[tuple[Tensor, object]] = []
        self._backward_called = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar over the module-level ops
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return add(self, scale(other, -1.0))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return elementwise_mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


class Parameter(Tensor):
    """A trainable tensor with a name for checkpointing.

    Parameters participate in optimizer state and in the L2 penalty set.
    """

    __slots__ = ("name",)

    def __init__(self, data, name: str):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _node(data: np.ndarray, parents: list[tuple[Tensor, object]], op: str) -> Tensor:
    _ensure_finite(data, op)
    out = Tensor(data, requires_grad=any(p.requires_grad for p, _ in parents))
    if out.requires_grad:
        out._parents = parents
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcasted gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# --- primitives ----------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = _node(
        a.data + b.data,
        [(a, lambda g: _unbroadcast(g, a.data.shape)),
         (b, lambda g: _unbroadcast(g, b.data.shape))],
        "add",
    )
    return out


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    return _node(
        a.data * b.data,
        [(a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
         (b, lambda g: _unbroadcast(g * a.data, b.data.shape))],
        "elementwise_mul",
    )


def scale(x: Tensor, s: float) -> Tensor:
    s = float(s)
    return _node(x.data * s, [(x, lambda g: g * s)], "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim == 2 and b.data.ndim == 2:
        if a.data.shape[1] != b.data.shape[0]:
            raise ValueError(f"matmul: shapes {a.data.shape} and {b.data.shape} mismatch")
        return _node(
            a.data @ b.data,
            [(a, lambda g: g @ b.data.T), (b, lambda g: a.data.T @ g)],
            "matmul",
        )
    if a.data.ndim == 2 and b.data.ndim == 1:
        if a.data.shape[1] != b.data.shape[0]:
            raise ValueError(f"matmul: shapes {a.data.shape} and {b.data.shape} mismatch")
        return _node(
            a.data @ b.data,
            [(a, lambda g: np.outer(g, b.data)), (b, lambda g: a.data.T @ g)],
            "matmul",
        )
    if a.data.ndim == 1 and b.data.ndim == 2:
        if a.data.shape[0] != b.data.shape[0]:
            raise ValueError(f"matmul: shapes {a.data.shape} and {b.data.shape} mismatch")
        return _node(
            a.data @ b.data,
            [(a, lambda g: b.data @ g), (b, lambda g: np.outer(a.data, g))],
            "matmul",
        )
    if a.data.ndim == 1 and b.data.ndim == 1:
        if a.data.shape[0] != b.data.shape[0]:
            raise ValueError(f"matmul: shapes {a.data.shape} and {b.data.shape} mismatch")
        return _node(
            np.asarray(a.data @ b.data),
            [(a, lambda g: g * b.data), (b, lambda g: g * a.data)],
            "matmul",
        )
    raise ValueError(f"matmul: unsupported ranks {a.data.ndim} and {b.data.ndim}")


def transpose(x: Tensor) -> Tensor:
    return _node(x.data.T.copy(), [(x, lambda g: g.T)], "transpose")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _node(np.where(mask, x.data, 0.0), [(x, lambda g: g * mask)], "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    factor = np.where(x.data > 0, 1.0, slope)
    return _node(x.data * factor, [(x, lambda g: g * factor)], "leaky_relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _node(y, [(x, lambda g: g * (1.0 - y * y))], "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # exp only of non-positive arguments, so no overflow either side
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return _node(y, [(x, lambda g: g * y * (1.0 - y))], "sigmoid")


def logsigmoid(x: Tensor) -> Tensor:
    """log(sigmoid(x)), computed stably as -log(1 + exp(-x))."""
    y = -np.logaddexp(0.0, -x.data)
    return _node(y, [(x, lambda g: g * _sigmoid(-x.data))], "logsigmoid")


def log(x: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(x.data)
    return _node(y, [(x, lambda g: g / x.data)], "log")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    ex = np.exp(shifted)
    y = ex / ex.sum(axis=axis, keepdims=True)

    def back(g):
        return y * (g - (g * y).sum(axis=axis, keepdims=True))

    return _node(y, [(x, back)], "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - logsum

    def back(g):
        return g - np.exp(y) * g.sum(axis=axis, keepdims=True)

    return _node(y, [(x, back)], "log_softmax")


def dropout(
    x: Tensor,
    rate: float,
    rng: int | np.random.Generator,
    train: bool,
) -> Tensor:
    """Inverted dropout: retained entries scaled by 1/(1-rate); identity at eval."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not train or rate == 0.0:
        return x
    gen = np.random.default_rng(rng) if isinstance(rng, int) else rng
    mask = (gen.random(x.data.shape) >= rate) / (1.0 - rate)
    return _node(x.data * mask, [(x, lambda g: g * mask)], "dropout")


def row_mean(x: Tensor) -> Tensor:
    """Mean over rows of a 2-D tensor: (n, d) -> (d,)."""
    n = x.data.shape[0]
    y = x.data.mean(axis=0)
    return _node(y, [(x, lambda g: np.broadcast_to(g / n, x.data.shape).copy())], "row_mean")


def tensor_sum(x: Tensor, axis: int | None = None) -> Tensor:
    if axis is None:
        y = np.asarray(x.data.sum())
        return _node(y, [(x, lambda g: np.broadcast_to(g, x.data.shape).copy())], "sum")
    y = x.data.sum(axis=axis)

    def back(g):
        return np.broadcast_to(np.expand_dims(g, axis), x.data.shape).copy()

    return _node(y, [(x, back)], "sum")


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows by index; rows may repeat. Backward scatter-adds."""
    idx = np.asarray(idx, dtype=np.int64)

    def back(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return gx

    return _node(x.data[idx], [(x, back)], "gather_rows")


def segment_sum(x: Tensor, idx: np.ndarray, n_segments: int) -> Tensor:
    """Sum rows of x into segments: out[s] = sum of x[i] where idx[i] == s."""
    idx = np.asarray(idx, dtype=np.int64)
    y = np.zeros((n_segments,) + x.data.shape[1:], dtype=np.float64)
    np.add.at(y, idx, x.data)
    return _node(y, [(x, lambda g: g[idx])], "segment_sum")


def stack_columns(xs: list[Tensor]) -> Tensor:
    """Stack 1-D tensors of equal length as the columns of a 2-D tensor."""
    y = np.stack([x.data for x in xs], axis=1)
    parents = [
        (x, (lambda g, i=i: g[:, i])) for i, x in enumerate(xs)
    ]
    return _node(y, parents, "stack_columns")


def column(x: Tensor, j: int) -> Tensor:
    """Column j of a 2-D tensor, kept as an (n, 1) tensor."""
    def back(g):
        gx = np.zeros_like(x.data)
        gx[:, j : j + 1] = g
        return gx

    return _node(x.data[:, j : j + 1].copy(), [(x, back)], "column")


def add_n(xs: list[Tensor]) -> Tensor:
    """Sum of equally-shaped tensors."""
    if not xs:
        raise ValueError("add_n: empty input")
    out = xs[0]
    for x in xs[1:]:
        out = add(out, x)
    return out


# --- reverse pass ---------------------------------------------------------


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss: Tensor, params: list[Parameter] | None = None) -> None:
    """Accumulate d(loss)/d(tensor) into .grad over the recorded graph.

    loss must be a scalar produced by recorded ops. Calling backward twice on
    the same loss is an error (build a fresh graph instead). When ``params``
    is given, any parameter unreachable from the loss gets a zero gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if loss._backward_called:
        raise RuntimeError("backward already called on this graph; rebuild the forward pass")
    loss._backward_called = True
    loss.grad = np.ones_like(loss.data)
    for node in reversed(_topo_order(loss)):
        g = node.grad
        if g is None:
            continue
        for parent, fn in node._parents:
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += fn(g)
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)


def zero_grad(params: list[Parameter]) -> None:
    for p in params:
        p.grad = None
