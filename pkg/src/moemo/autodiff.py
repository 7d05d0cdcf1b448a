"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Tensors hold float64 numpy arrays. Every differentiable op records its
parents and a vector-Jacobian closure on the output tensor at execution
time (dynamic tape); ``backward`` replays the records in reverse
topological order. Broadcasting is deliberately restricted to bias-style
trailing-axis broadcast; everything else must be an explicit reshape.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor",
    "Tape",
    "tensor",
    "backward",
    "no_grad",
    "matmul",
    "add",
    "mul",
    "scalar_mul",
    "relu",
    "gelu",
    "layer_norm",
    "conv1d",
    "concat",
    "mean",
    "sum_all",
    "transpose",
    "reshape",
    "slice_along",
    "softmax",
    "log_softmax",
    "cross_entropy_with_softmax",
]

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable recording of backward closures inside the block."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Immutable dense float64 array plus an optional gradient record."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Optional[Callable[[np.ndarray], tuple[np.ndarray, ...]]] = None
        self._op: str = ""

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def backward(self) -> "Tape":
        return backward(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op!r})"

    # Small operator sugar; the module-level functions are the real API.
    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(other))

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scalar_mul(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return add(self, scalar_mul(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _record(out: Tensor, parents: Sequence[Tensor], vjp, op: str) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    return out


class Tape:
    """Reverse-topological record of one backward pass.

    ``nodes`` lists every tensor reachable from the loss in an order where
    parents precede children; ``gradients`` maps id(tensor) to the
    accumulated gradient array.
    """

    def __init__(self, nodes: list[Tensor], gradients: dict[int, np.ndarray]):
        self.nodes = nodes
        self.gradients = gradients

    def grad(self, t: Tensor) -> Optional[np.ndarray]:
        return self.gradients.get(id(t))


def backward(loss: Tensor) -> Tape:
    """Accumulate gradients of a scalar loss into every requires_grad tensor.

    Sets ``t.grad`` on each participating tensor and returns the Tape.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")

    # Topological order via iterative DFS (graphs can be deep for long loops).
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
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
            if id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.get(id(node))
        if g is None or node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            acc = grads.get(id(parent))
            grads[id(parent)] = pg if acc is None else acc + pg
        # Drop intermediate gradients once consumed to bound peak memory.
        if node is not loss and not node.requires_grad:
            grads.pop(id(node), None)

    for node in order:
        if node.requires_grad and id(node) in grads:
            node.grad = grads[id(node)]
    return Tape(order, grads)


def _check_2d(t: Tensor, name: str):
    if t.data.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {t.shape}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    _check_2d(a, "matmul lhs")
    _check_2d(b, "matmul rhs")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def vjp(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _record(out, (a, b), vjp, "matmul")


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also allows bias-style broadcast where b's shape is a
    suffix of a's shape."""
    if a.shape == b.shape:
        out = Tensor(a.data + b.data)

        def vjp(g):
            return g, g

        return _record(out, (a, b), vjp, "add")

    if a.shape[len(a.shape) - len(b.shape):] == b.shape and len(b.shape) < len(a.shape):
        out = Tensor(a.data + b.data)
        n_lead = len(a.shape) - len(b.shape)

        def vjp(g):
            gb = g.sum(axis=tuple(range(n_lead))) if b.requires_grad else None
            return g, gb

        return _record(out, (a, b), vjp, "add_bias")

    raise ValueError(f"add shape mismatch: {a.shape} + {b.shape}")


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} * {b.shape}")
    out = Tensor(a.data * b.data)

    def vjp(g):
        return g * b.data, g * a.data

    return _record(out, (a, b), vjp, "mul")


def scalar_mul(a: Tensor, s: float) -> Tensor:
    out = Tensor(a.data * s)

    def vjp(g):
        return (g * s,)

    return _record(out, (a,), vjp, "scalar_mul")


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0.0))
    mask = x.data > 0

    def vjp(g):
        return (g * mask,)

    return _record(out, (x,), vjp, "relu")


_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x: Tensor) -> Tensor:
    """Exact GELU: x * Phi(x) with the Gaussian CDF."""
    phi_cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    out = Tensor(x.data * phi_cdf)

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
        return (g * (phi_cdf + x.data * pdf),)

    return _record(out, (x,), vjp, "gelu")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ValueError(
            f"layer_norm gain/bias must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv_std
    out = Tensor(xhat * gain.data + bias.data)

    def vjp(g):
        dxhat = g * gain.data
        gx = None
        if x.requires_grad:
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            gx = (dxhat - m1 - xhat * m2) * inv_std
        axes = tuple(range(g.ndim - 1))
        gg = (g * xhat).sum(axis=axes) if gain.requires_grad else None
        gb = g.sum(axis=axes) if bias.requires_grad else None
        return gx, gg, gb

    return _record(out, (x, gain, bias), vjp, "layer_norm")


def conv1d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """1-D convolution, stride 1, no padding.

    x: [T, C_in], w: [k, C_in, C_out], b: [C_out] -> [T-k+1, C_out].
    """
    if x.data.ndim != 2 or w.data.ndim != 3:
        raise ValueError(f"conv1d expects x [T,Cin] and w [k,Cin,Cout], got {x.shape}, {w.shape}")
    t_len, c_in = x.shape
    k, w_cin, c_out = w.shape
    if w_cin != c_in:
        raise ValueError(f"conv1d channel mismatch: x {x.shape} vs w {w.shape}")
    if b.shape != (c_out,):
        raise ValueError(f"conv1d bias must have shape ({c_out},), got {b.shape}")
    if t_len < k:
        raise ValueError(f"conv1d input length {t_len} shorter than kernel {k}")
    t_out = t_len - k + 1
    # im2col: windows[t] = x[t:t+k].ravel(); conv becomes one GEMM.
    windows = np.lib.stride_tricks.sliding_window_view(x.data, (k,), axis=0)  # [t_out, c_in, k]
    cols = windows.transpose(0, 2, 1).reshape(t_out, k * c_in)
    w2 = w.data.reshape(k * c_in, c_out)
    out = Tensor(cols @ w2 + b.data)

    def vjp(g):
        gx = None
        if x.requires_grad:
            gcols = g @ w2.T  # [t_out, k*c_in]
            gx = np.zeros_like(x.data)
            gwin = gcols.reshape(t_out, k, c_in)
            for i in range(k):
                gx[i:i + t_out] += gwin[:, i, :]
        gw = (cols.T @ g).reshape(k, c_in, c_out) if w.requires_grad else None
        gb = g.sum(axis=0) if b.requires_grad else None
        return gx, gw, gb

    return _record(out, (x, w, b), vjp, "conv1d")


def concat(parts: Sequence[Tensor], axis: int) -> Tensor:
    if not parts:
        raise ValueError("concat of empty sequence")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(parts), vjp, "concat")


def mean(x: Tensor, axis: int) -> Tensor:
    out = Tensor(x.data.mean(axis=axis))
    n = x.shape[axis]

    def vjp(g):
        return (np.repeat(np.expand_dims(g, axis), n, axis=axis) / n,)

    return _record(out, (x,), vjp, "mean")


def sum_all(x: Tensor) -> Tensor:
    out = Tensor(x.data.sum())

    def vjp(g):
        return (np.full_like(x.data, float(g)),)

    return _record(out, (x,), vjp, "sum_all")


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    out = Tensor(x.data.transpose(axes))
    if axes is None:
        inverse = None
    else:
        inverse = np.argsort(axes)

    def vjp(g):
        return (g.transpose(inverse),)

    return _record(out, (x,), vjp, "transpose")


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = Tensor(x.data.reshape(shape))
    orig = x.shape

    def vjp(g):
        return (g.reshape(orig),)

    return _record(out, (x,), vjp, "reshape")


def slice_along(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ValueError(f"slice axis {axis} invalid for shape {x.shape}")
    axis = axis % x.data.ndim
    n = x.shape[axis]
    if not (0 <= start < stop <= n):
        raise ValueError(f"slice [{start}:{stop}] invalid for axis {axis} of shape {x.shape}")
    index = (slice(None),) * axis + (slice(start, stop),)
    out = Tensor(x.data[index])

    def vjp(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _record(out, (x,), vjp, "slice_along")


def _softmax_raw(z: np.ndarray, axis: int) -> np.ndarray:
    shifted = z - z.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ValueError(f"softmax axis {axis} invalid for shape {x.shape}")
    s = _softmax_raw(x.data, axis)
    out = Tensor(s)

    def vjp(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - dot),)

    return _record(out, (x,), vjp, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.data.ndim <= axis < x.data.ndim:
        raise ValueError(f"log_softmax axis {axis} invalid for shape {x.shape}")
    z = x.data
    zmax = z.max(axis=axis, keepdims=True)
    logsumexp = np.log(np.exp(z - zmax).sum(axis=axis, keepdims=True)) + zmax
    out = Tensor(z - logsumexp)
    s = np.exp(out.data)

    def vjp(g):
        return (g - s * g.sum(axis=axis, keepdims=True),)

    return _record(out, (x,), vjp, "log_softmax")


def cross_entropy_with_softmax(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels against softmax(logits).

    Fused for numerical stability; logits [N, C], labels [N] ints.
    """
    _check_2d(logits, "cross_entropy logits")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label index out of range")
    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    logp = z - logsumexp
    out = Tensor(-logp[np.arange(n), labels].mean())

    def vjp(g):
        p = np.exp(logp)
        p[np.arange(n), labels] -= 1.0
        return (p * (float(g) / n),)

    return _record(out, (logits,), vjp, "cross_entropy_with_softmax")
