"""Dense float64 tensors with reverse-mode automatic differentiation.

A small numpy-backed engine with exactly the forward ops a transformer
encoder needs: matmul, row softmax, layer norm, gelu, embedding lookup,
elementwise arithmetic and reductions. Gradients are computed by a single
reverse sweep over a tape of Nodes; the tape is consumed by backward().
A central-difference gradient checker doubles as the verification harness
for every op.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

Array = np.ndarray

# Additive score penalty for masked positions. Finite by design so that
# every forward op keeps the "no NaN/Inf" invariant even on masked rows.
MASK_FILL = -1e9

# Layer-norm denominator offset used throughout the model.
LN_EPS = 1e-5

_SQRT1_2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


class Node:
    """Graph record for one op: parent tensors plus a vector-Jacobian closure."""

    __slots__ = ("parents", "vjp")

    def __init__(self, parents: tuple, vjp: Callable[[Array], tuple]):
        self.parents = parents
        self.vjp = vjp


class Tensor:
    """Dense float64 array, optionally tracked for reverse-mode gradients.

    Tensors without a graph node are plain immutable values; tensors with
    ``requires_grad`` accumulate into ``grad`` during backward().
    """

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, node: Node | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Array | None = None
        self.node = node

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __sub__(self, other):
        return add(self, neg(_coerce(other)))

    def __rsub__(self, other):
        return add(_coerce(other), neg(self))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def __repr__(self) -> str:
        flags = []
        if self.requires_grad:
            flags.append("requires_grad")
        if self.node is not None:
            flags.append("tracked")
        tag = f" [{', '.join(flags)}]" if flags else ""
        return f"Tensor(shape={self.shape}{tag})"


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(parents: Sequence[Tensor]) -> bool:
    return any(p.requires_grad or p.node is not None for p in parents)


def _result(data: Array, op: str, parents: tuple, vjp) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op}: non-finite values in result")
    node = Node(parents, vjp) if _tracked(parents) else None
    return Tensor(data, node=node)


def _unbroadcast(g: Array, shape: tuple[int, ...]) -> Array:
    """Reduce a gradient back to the shape of a broadcast operand."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- elementwise ops ---------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(out, "add", (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(out, "mul", (a, b), vjp)


def neg(a) -> Tensor:
    a = _coerce(a)

    def vjp(g):
        return (-g,)

    return _result(-a.data, "neg", (a,), vjp)


def log(a) -> Tensor:
    a = _coerce(a)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _result(out, "log", (a,), vjp)


def exp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _result(out, "exp", (a,), vjp)


def gelu(a) -> Tensor:
    """Exact Gaussian-CDF gelu: x * Phi(x), with Phi via erf."""
    a = _coerce(a)
    cdf = 0.5 * (1.0 + erf(a.data * _SQRT1_2))
    out = a.data * cdf

    def vjp(g):
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * a.data * a.data)
        return (g * (cdf + a.data * pdf),)

    return _result(out, "gelu", (a,), vjp)


# -- shape ops ---------------------------------------------------------------


def reshape(a, shape: tuple[int, ...]) -> Tensor:
    a = _coerce(a)
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _result(out, "reshape", (a,), vjp)


def transpose(a, axes: tuple[int, ...]) -> Tensor:
    a = _coerce(a)
    out = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def vjp(g):
        return (g.transpose(inverse),)

    return _result(out, "transpose", (a,), vjp)


def getitem(a, idx) -> Tensor:
    """Basic (slice/int) indexing; gradients scatter back into place."""
    a = _coerce(a)
    out = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[idx] = g
        return (ga,)

    return _result(out, "getitem", (a,), vjp)


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _result(out, "sum", (a,), vjp)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = _coerce(a)
    out = a.data.mean(axis=axis, keepdims=keepdims)
    denom = a.size if axis is None else a.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / denom, a.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / denom, a.shape).copy(),)

    return _result(out, "mean", (a,), vjp)


# -- linear algebra and layers ------------------------------------------------


def matmul(a, b) -> Tensor:
    """Matrix product with numpy batch broadcasting over leading axes."""
    a, b = _coerce(a), _coerce(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs matrices, got shapes {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(out, "matmul", (a, b), vjp)


def softmax_rows(x, beta: float = 1.0, mask: Array | None = None) -> Tensor:
    """Row-wise softmax of beta*x along the last axis; rows sum to one.

    ``mask`` is an optional boolean array broadcastable to x's shape; False
    entries receive the additive MASK_FILL penalty before normalization, so
    their weight underflows to zero without ever producing non-finite values.
    """
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    x = _coerce(x)
    z = beta * x.data
    if mask is not None:
        z = z + np.where(np.asarray(mask, dtype=bool), 0.0, MASK_FILL)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * y).sum(axis=-1, keepdims=True)
        return (beta * y * (g - inner),)

    return _result(y, "softmax_rows", (x,), vjp)


def layer_norm(x, gain, bias, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis to zero mean, unit (population) variance, then affine."""
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    x, gain, bias = _coerce(x), _coerce(gain), _coerce(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain.data + bias.data

    def vjp(g):
        ggain = _unbroadcast(g * xhat, gain.shape)
        gbias = _unbroadcast(g, bias.shape)
        h = g * gain.data
        dx = inv * (h - h.mean(axis=-1, keepdims=True) - xhat * (h * xhat).mean(axis=-1, keepdims=True))
        return dx, ggain, gbias

    return _result(out, "layer_norm", (x, gain, bias), vjp)


def embedding(table, ids) -> Tensor:
    """Row lookup into a [n, d] table with integer ids of any shape."""
    table = _coerce(table)
    ids = np.asarray(ids)
    if ids.dtype.kind not in "iu":
        raise ValueError(f"embedding ids must be integers, got dtype {ids.dtype}")
    n = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= n):
        raise ValueError(f"embedding id out of range [0, {n})")
    out = table.data[ids]

    def vjp(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[-1]))
        return (gt,)

    return _result(out, "embedding", (table,), vjp)


# -- reverse sweep -------------------------------------------------------------


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss; fills .grad on requires_grad tensors.

    The graph is consumed: running backward a second time through any of the
    same nodes raises RuntimeError.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor")
    if loss.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss.node is None:
        raise ValueError("backward on a detached graph (loss was not produced by tracked ops)")

    # Iterative postorder topological sort over graph-bearing tensors.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if expanded:
            order.append(t)
            continue
        if id(t) in seen or t.node is None:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t.node.parents:
            if p.node is not None and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    for t in reversed(order):
        node = t.node
        g = grads.pop(id(t), None)
        if g is None or node is None:
            continue
        if node.vjp is None:
            raise RuntimeError("graph already consumed by a previous backward")
        parent_grads = node.vjp(g)
        for p, pg in zip(node.parents, parent_grads):
            if pg is None:
                continue
            if p.requires_grad:
                p.grad = pg.copy() if p.grad is None else p.grad + pg
            if p.node is not None:
                key = id(p)
                grads[key] = pg if key not in grads else grads[key] + pg
        node.vjp = None
        node.parents = ()


# -- gradient checking ----------------------------------------------------------


@dataclass
class GradCheckReport:
    """Outcome of one analytic-vs-central-difference comparison."""

    max_rel_error: float
    passed: bool
    n_checked: int


def grad_check(f, x: Tensor, h: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare analytic gradients of scalar f(x) against central differences.

    Per-coordinate error is |a - n| / max(1, |a|, |n|): relative for large
    gradients, absolute near zero, so tiny true gradients do not produce
    spurious failures. Marks x as requires_grad.
    """
    if not isinstance(x, Tensor):
        raise TypeError("grad_check expects a Tensor input")
    x.requires_grad = True
    x.grad = None
    out = f(x)
    if not isinstance(out, Tensor) or out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    backward(out)
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()
    flat = x.data.reshape(-1)
    aflat = analytic.reshape(-1)
    worst = 0.0
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x).data.item()
        flat[i] = orig - h
        fm = f(x).data.item()
        flat[i] = orig
        numeric = (fp - fm) / (2.0 * h)
        a = aflat[i]
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        if err > worst:
            worst = err
    return GradCheckReport(max_rel_error=worst, passed=worst < tol, n_checked=flat.size)
