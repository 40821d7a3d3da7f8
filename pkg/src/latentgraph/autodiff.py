"""Minimal dense-tensor reverse-mode automatic differentiation.

Every differentiable operation computes its result eagerly on float64
numpy buffers and records an adjoint closure on the output tensor. The
recorded graph is dynamic: it is rebuilt on every forward pass, and
``backward`` replays the adjoints in reverse execution order. The engine
is deliberately small; it supports exactly the operations the
graph-learning models need, all in double precision so that gradients
can be validated against central finite differences to tight tolerances.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import ContractError, DimensionError, NumericalError

# Smoothing added under the square root when differentiating pairwise
# distances, so the gradient at coincident points is 0 instead of NaN.
DISTANCE_EPS = 1e-12

# Guard added to row sums before normalization.
DEGREE_EPS = 1e-12


class Tensor:
    """Dense float64 array with a gradient buffer and an op record.

    Leaves are built directly from data; tensors produced by the ops in
    this module additionally carry the name of the producing operation,
    references to its inputs, and a closure that propagates the output
    gradient to those inputs.
    """

    __slots__ = ("values", "grad", "requires_grad", "op", "parents", "_adjoint")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op: str | None = None
        self.parents: tuple[Tensor, ...] = ()
        self._adjoint: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def item(self) -> float:
        return float(self.values)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        tag = self.op or ("param" if self.requires_grad else "leaf")
        return f"Tensor(shape={self.shape}, op={tag})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, other)
        return mul(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    """Wrap arrays/scalars as constant leaves; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def parameter(values) -> Tensor:
    """A trainable leaf tensor."""
    return Tensor(values, requires_grad=True)


def _record(values: np.ndarray, op: str, parents: tuple[Tensor, ...],
            adjoint: Callable[[np.ndarray], None]) -> Tensor:
    out = Tensor(values, requires_grad=True)
    out.op = op
    out.parents = parents
    out._adjoint = adjoint
    return out


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad for t in tensors)


def build_tape(root: Tensor) -> list[Tensor]:
    """All tensors reachable from ``root``, inputs before outputs.

    The returned list is a valid forward execution order, so replaying
    adjoints over ``reversed(tape)`` visits every recorded operation
    exactly once with its output gradient fully accumulated.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate dLoss/dLeaf into ``grad`` for every reachable tensor.

    ``loss`` must be a scalar (shape ``()``). All gradient buffers in the
    recorded graph are zero-initialized first, so repeated calls do not
    leak gradients across passes.
    """
    if loss.values.ndim != 0:
        raise ContractError(
            f"backward requires a scalar loss, got shape {loss.shape}")
    tape = build_tape(loss)
    for t in tape:
        t.grad = np.zeros_like(t.values)
    loss.grad = np.ones_like(loss.values)
    for t in reversed(tape):
        if t._adjoint is not None:
            t._adjoint(t.grad)


def zero_grads(tensors: Iterable[Tensor]) -> None:
    for t in tensors:
        t.grad = np.zeros_like(t.values)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    values = a.values + b.values
    if not _needs_grad(a, b):
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += _unbroadcast(g, a.shape)
        b.grad += _unbroadcast(g, b.shape)

    return _record(values, "add", (a, b), adjoint)


def subtract(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    values = a.values - b.values
    if not _needs_grad(a, b):
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += _unbroadcast(g, a.shape)
        b.grad -= _unbroadcast(g, b.shape)

    return _record(values, "subtract", (a, b), adjoint)


def mul(a, b) -> Tensor:
    """Elementwise product with numpy broadcasting."""
    a, b = as_tensor(a), as_tensor(b)
    values = a.values * b.values
    if not _needs_grad(a, b):
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += _unbroadcast(g * b.values, a.shape)
        b.grad += _unbroadcast(g * a.values, b.shape)

    return _record(values, "mul", (a, b), adjoint)


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    values = a.values * c
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += g * c

    return _record(values, "scalar_mul", (a,), adjoint)


def sum_all(a) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    a = as_tensor(a)
    values = np.asarray(a.values.sum())
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += g

    return _record(values, "sum_all", (a,), adjoint)


# ---------------------------------------------------------------------------
# elementwise nonlinearities


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.values > 0
    values = np.maximum(a.values, 0.0)  # propagates NaN instead of hiding it
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += g * mask

    return _record(values, "relu", (a,), adjoint)


def _sigmoid_values(x: np.ndarray) -> np.ndarray:
    # Stable for large |x|: both branches only exponentiate -|x|.
    ez = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    values = _sigmoid_values(a.values)
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += g * values * (1.0 - values)

    return _record(values, "sigmoid", (a,), adjoint)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    values = np.tanh(a.values)
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += g * (1.0 - values * values)

    return _record(values, "tanh", (a,), adjoint)


def softplus(a) -> Tensor:
    """log(1 + exp(x)), stable for large |x|; derivative is sigmoid(x)."""
    a = as_tensor(a)
    values = np.maximum(a.values, 0.0) + np.log1p(np.exp(-np.abs(a.values)))
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += g * _sigmoid_values(a.values)

    return _record(values, "softplus", (a,), adjoint)


# ---------------------------------------------------------------------------
# linear algebra and row structure


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(
            f"matmul requires (m,k) x (k,n) operands, got {a.shape} x {b.shape}")
    values = a.values @ b.values
    if not _needs_grad(a, b):
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += g @ b.values.T
        b.grad += a.values.T @ g

    return _record(values, "matmul", (a, b), adjoint)


def pairwise_euclidean(e) -> Tensor:
    """All-pairs Euclidean distances between the rows of ``e``.

    The result is exactly symmetric with an exactly zero diagonal. The
    gradient uses the smoothed denominator sqrt(d^2 + DISTANCE_EPS), which
    defines the derivative at coincident points (and on the diagonal) as 0.
    """
    e = as_tensor(e)
    if e.values.ndim != 2:
        raise DimensionError(f"pairwise_euclidean expects an (N,k) matrix, got {e.shape}")
    v = e.values
    sq_norms = (v * v).sum(axis=1)
    sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * (v @ v.T)
    sq = 0.5 * (sq + sq.T)  # exact symmetry despite BLAS rounding
    np.maximum(sq, 0.0, out=sq)
    np.fill_diagonal(sq, 0.0)
    values = np.sqrt(sq)
    if not e.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        w = g / np.sqrt(sq + DISTANCE_EPS)
        np.fill_diagonal(w, 0.0)  # diagonal is constant 0, no gradient
        s = w + w.T
        e.grad += s.sum(axis=1, keepdims=True) * v - s @ v

    return _record(values, "pairwise_euclidean", (e,), adjoint)


def row_normalize(a) -> Tensor:
    """Divide each row by its sum (plus a small guard).

    Rows must have strictly positive sums; a non-positive row raises a
    NumericalError naming the offending row.
    """
    a = as_tensor(a)
    if a.values.ndim != 2:
        raise DimensionError(f"row_normalize expects a matrix, got {a.shape}")
    sums = a.values.sum(axis=1)
    if np.any(sums <= 0.0):
        i = int(np.argmin(sums))
        raise NumericalError(
            f"row_normalize: row {i} has non-positive sum {sums[i]!r}")
    denom = (sums + DEGREE_EPS)[:, None]
    values = a.values / denom
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        a.grad += (g - (g * values).sum(axis=1, keepdims=True)) / denom

    return _record(values, "row_normalize", (a,), adjoint)


def concat_rows(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionError(
            f"concat_rows requires matching widths, got {a.shape} and {b.shape}")
    values = np.concatenate([a.values, b.values], axis=0)
    if not _needs_grad(a, b):
        return Tensor(values)
    split = a.shape[0]

    def adjoint(g: np.ndarray) -> None:
        a.grad += g[:split]
        b.grad += g[split:]

    return _record(values, "concat_rows", (a, b), adjoint)


def gather_rows(a, rows) -> Tensor:
    a = as_tensor(a)
    idx = np.asarray(rows, dtype=np.intp)
    values = a.values[idx]
    if not a.requires_grad:
        return Tensor(values)

    def adjoint(g: np.ndarray) -> None:
        np.add.at(a.grad, idx, g)

    return _record(values, "gather_rows", (a,), adjoint)


def row_softmax_cross_entropy(logits, labels, mask) -> Tensor:
    """Mean softmax cross-entropy over the masked rows of ``logits``.

    ``labels`` holds integer class ids per row; ``mask`` is either a
    boolean vector or an array of row indices selecting the rows that
    contribute to the loss. Uses the max-shifted softmax for stability.
    """
    logits = as_tensor(logits)
    if logits.values.ndim != 2:
        raise DimensionError(f"expected (N,C) logits, got {logits.shape}")
    labels = np.asarray(labels)
    mask = np.asarray(mask)
    idx = np.flatnonzero(mask) if mask.dtype == bool else mask.astype(np.intp)
    if idx.size == 0:
        raise ContractError("cross entropy needs at least one masked row")
    y = labels[idx].astype(np.intp)
    if np.any(y < 0) or np.any(y >= logits.shape[1]):
        raise ContractError("label outside [0, C) among masked rows")
    z = logits.values[idx]
    z = z - z.max(axis=1, keepdims=True)
    exp_z = np.exp(z)
    sum_exp = exp_z.sum(axis=1, keepdims=True)
    log_probs = z - np.log(sum_exp)
    losses = -log_probs[np.arange(idx.size), y]
    values = np.asarray(losses.mean())
    if not logits.requires_grad:
        return Tensor(values)
    probs = exp_z / sum_exp

    def adjoint(g: np.ndarray) -> None:
        d = probs.copy()
        d[np.arange(idx.size), y] -= 1.0
        d *= float(g) / idx.size
        full = np.zeros_like(logits.values)
        full[idx] = d
        logits.grad += full

    return _record(values, "row_softmax_cross_entropy", (logits,), adjoint)


def softmax_rows(values: np.ndarray) -> np.ndarray:
    """Plain-numpy row softmax (no gradient), shared by evaluation code."""
    z = values - values.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)
