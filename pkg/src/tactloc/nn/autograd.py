"""Reverse-mode automatic differentiation over numpy arrays.

Every op builds its result eagerly and, when any input participates in
gradient computation, attaches a vector-Jacobian closure.  ``backward`` walks
the recorded graph in reverse topological order and accumulates gradients
*additively* into leaf tensors, so calling backward twice before an optimizer
step sums the two gradients (the two-finger training protocol relies on this).

All data is float64.  Shapes follow numpy broadcasting; gradients are summed
back down to each operand's shape.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ConfigurationError, GradientStateError, ShapeMismatchError

_GRAD_ENABLED = True
_F64 = np.dtype(np.float64)

CROSS_ENTROPY_FLOOR = 1e-12


class no_grad:
    """Context manager that disables graph recording (inference mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._saved = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, exc_type, exc, tb):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._saved
        return False


class Tensor:
    """A float64 numpy array plus a gradient slot and an optional graph hook.

    ``data`` is row-major; ``grad`` is lazily allocated with the same shape.
    Leaf tensors created with ``requires_grad=True`` keep their gradient
    between backward calls until it is cleared.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        if type(data) is np.ndarray and data.dtype == _F64:
            arr = data if data.flags.c_contiguous else np.ascontiguousarray(data)
        else:
            arr = np.ascontiguousarray(data, dtype=_F64)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._vjp = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def backward(self) -> None:
        backward(self)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None) -> "Tensor":
        return tmean(self, axis=axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def __add__(self, other):
        return add(self, as_tensor(other))

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, as_tensor(other))

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, as_tensor(other))

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __truediv__(self, other):
        return div(self, as_tensor(other))

    def __rtruediv__(self, other):
        return div(as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, as_tensor(other))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(*inputs: Tensor) -> bool:
    if not _GRAD_ENABLED:
        return False
    return any(t.requires_grad or t._vjp is not None for t in inputs)


def _needs(t: Tensor) -> bool:
    return t.requires_grad or t._vjp is not None


def _node(data: np.ndarray, parents: tuple, vjp) -> Tensor:
    out = Tensor(data)
    out.requires_grad = True
    out._parents = parents
    out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def backward(loss: Tensor) -> None:
    """Propagate gradients from a scalar loss into every reachable leaf.

    Raises GradientStateError if the tensor is not a scalar or carries no
    recorded forward graph.
    """
    if loss.data.size != 1:
        raise GradientStateError(f"backward requires a scalar loss, got shape {loss.shape}")
    if loss._vjp is None:
        raise GradientStateError("backward called without a recorded forward pass")

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent._vjp is not None or parent.requires_grad:
                stack.append((parent, False))

    # Interior nodes get a fresh gradient each pass; leaves keep accumulating.
    for node in topo:
        if node._vjp is not None:
            node.grad = None
    loss.grad = np.ones_like(loss.data)

    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        for parent, pgrad in zip(node._parents, node._vjp(node.grad)):
            if pgrad is None or not _needs(parent):
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += pgrad


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data
    if not _tracked(a, b):
        return Tensor(data)

    def vjp(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape))

    return _node(data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data
    if not _tracked(a, b):
        return Tensor(data)

    def vjp(g):
        return (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape))

    return _node(data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data
    if not _tracked(a, b):
        return Tensor(data)

    def vjp(g):
        ga = _unbroadcast(g * b.data, a.shape) if _needs(a) else None
        gb = _unbroadcast(g * a.data, b.shape) if _needs(b) else None
        return (ga, gb)

    return _node(data, (a, b), vjp)


def div(a: Tensor, b: Tensor) -> Tensor:
    data = a.data / b.data
    if not _tracked(a, b):
        return Tensor(data)

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape) if _needs(a) else None
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if _needs(b) else None
        return (ga, gb)

    return _node(data, (a, b), vjp)


def neg(a: Tensor) -> Tensor:
    data = -a.data
    if not _tracked(a):
        return Tensor(data)
    return _node(data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatchError("matmul (2-d only)", a.shape, b.shape)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)
    data = a.data @ b.data
    if not _tracked(a, b):
        return Tensor(data)

    def vjp(g):
        ga = g @ b.data.T if _needs(a) else None
        gb = a.data.T @ g if _needs(b) else None
        return (ga, gb)

    return _node(data, (a, b), vjp)


def linear(x: Tensor, weights: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map ``x @ weights + bias`` with shape checking.

    ``x`` is (batch, in) or (in,); weights (in, out); bias (out,).
    """
    squeeze = False
    if x.data.ndim == 1:
        x = reshape(x, (1, x.shape[0]))
        squeeze = True
    if x.data.ndim != 2 or weights.data.ndim != 2 or x.shape[1] != weights.shape[0]:
        raise ShapeMismatchError("linear", x.shape, weights.shape)
    out = matmul(x, weights)
    if bias is not None:
        if bias.data.shape != (weights.shape[1],):
            raise ShapeMismatchError("linear bias", bias.shape, (weights.shape[1],))
        out = add(out, bias)
    if squeeze:
        out = reshape(out, (weights.shape[1],))
    return out


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """1-d convolution with zero same-padding and kernel size 3.

    ``x`` is (channels, length) or (batch, channels, length); kernel is
    (out_channels, in_channels, 3).  Output length equals input length.
    """
    if kernel.data.ndim != 3 or kernel.shape[2] != 3:
        raise ConfigurationError(f"conv1d supports kernel size 3 only, got kernel shape {kernel.shape}")
    squeeze = False
    if x.data.ndim == 2:
        x = reshape(x, (1,) + x.shape)
        squeeze = True
    if x.data.ndim != 3 or x.shape[1] != kernel.shape[1]:
        raise ShapeMismatchError("conv1d", x.shape, kernel.shape)
    batch, cin, length = x.shape
    cout = kernel.shape[0]

    xp = np.zeros((batch, cin, length + 2), dtype=np.float64)
    xp[:, :, 1:-1] = x.data
    data = np.zeros((batch, cout, length), dtype=np.float64)
    for k in range(3):
        # one large contraction over channels beats a batch of tiny matmuls
        data += np.tensordot(xp[:, :, k:k + length], kernel.data[:, :, k], axes=(1, 1)).transpose(0, 2, 1)
    if bias is not None:
        if bias.data.shape != (cout,):
            raise ShapeMismatchError("conv1d bias", bias.shape, (cout,))
        data += bias.data[None, :, None]

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    if not _tracked(*parents):
        out = Tensor(data)
        return reshape_plain(out, data.shape[1:]) if squeeze else out

    def vjp(g):
        gx = None
        if _needs(x):
            gxp = np.zeros_like(xp)
            for k in range(3):
                gxp[:, :, k:k + length] += np.tensordot(g, kernel.data[:, :, k], axes=(1, 0)).transpose(0, 2, 1)
            gx = gxp[:, :, 1:-1]
        gk = None
        if _needs(kernel):
            gk = np.zeros_like(kernel.data)
            for k in range(3):
                gk[:, :, k] = np.tensordot(g, xp[:, :, k:k + length], axes=([0, 2], [0, 2]))
        if bias is None:
            return (gx, gk)
        gb = g.sum(axis=(0, 2)) if _needs(bias) else None
        return (gx, gk, gb)

    out = _node(data, parents, vjp)
    if squeeze:
        out = reshape(out, data.shape[1:])
    return out


def reshape_plain(t: Tensor, shape) -> Tensor:
    return Tensor(t.data.reshape(shape))


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a: Tensor) -> Tensor:
    data = np.maximum(a.data, 0.0)
    if not _tracked(a):
        return Tensor(data)
    mask = a.data > 0

    def vjp(g):
        return (g * mask,)

    return _node(data, (a,), vjp)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)
    if not _tracked(a):
        return Tensor(data)

    def vjp(g):
        return (g * (1.0 - data * data),)

    return _node(data, (a,), vjp)


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))
    if not _tracked(a):
        return Tensor(data)

    def vjp(g):
        return (g * data * (1.0 - data),)

    return _node(data, (a,), vjp)


def exp(a: Tensor) -> Tensor:
    data = np.exp(a.data)
    if not _tracked(a):
        return Tensor(data)

    def vjp(g):
        return (g * data,)

    return _node(data, (a,), vjp)


def log(a: Tensor, floor: float | None = None) -> Tensor:
    """Natural log; with ``floor`` the argument is clamped below before the
    log and the gradient is evaluated at the clamped value (bounded)."""
    arg = a.data if floor is None else np.maximum(a.data, floor)
    data = np.log(arg)
    if not _tracked(a):
        return Tensor(data)

    def vjp(g):
        return (g / arg,)

    return _node(data, (a,), vjp)


# ---------------------------------------------------------------------------
# reductions and shape ops


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)
    if not _tracked(a):
        return Tensor(data)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        g2 = g
        if not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % a.data.ndim for ax in axes)
            g2 = np.expand_dims(g, tuple(sorted(axes)))
        return (np.broadcast_to(g2, a.shape).copy(),)

    return _node(data, (a,), vjp)


def tmean(a: Tensor, axis=None) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([a.data.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis), Tensor(1.0 / n))


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    data = a.data.reshape(shape)
    if not _tracked(a):
        return Tensor(data)

    def vjp(g):
        return (g.reshape(a.shape),)

    return _node(data, (a,), vjp)


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    """Concatenate along an axis; the gradient splits back to each operand."""
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    if not _tracked(*tensors):
        return Tensor(data)
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def vjp(g):
        g = np.moveaxis(g, axis, 0)
        return tuple(
            np.moveaxis(g[bounds[i]:bounds[i + 1]], 0, axis) for i in range(len(tensors))
        )

    return _node(data, tuple(tensors), vjp)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero outside the band."""
    data = np.clip(a.data, lo, hi)
    if not _tracked(a):
        return Tensor(data)
    mask = (a.data >= lo) & (a.data <= hi)

    def vjp(g):
        return (g * mask,)

    return _node(data, (a,), vjp)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties route the gradient to ``a``."""
    data = np.minimum(a.data, b.data)
    if not _tracked(a, b):
        return Tensor(data)
    take_a = a.data <= b.data

    def vjp(g):
        ga = _unbroadcast(g * take_a, a.shape) if _needs(a) else None
        gb = _unbroadcast(g * ~take_a, b.shape) if _needs(b) else None
        return (ga, gb)

    return _node(data, (a, b), vjp)


def take_along_last(a: Tensor, indices: np.ndarray) -> Tensor:
    """Gather one entry along the last axis for every leading position."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape != a.shape[:-1]:
        raise ShapeMismatchError("take_along_last", a.shape, idx.shape)
    k = a.shape[-1]
    flat = a.data.reshape(-1, k)
    rows = np.arange(flat.shape[0])
    data = flat[rows, idx.reshape(-1)].reshape(idx.shape)
    if not _tracked(a):
        return Tensor(data)

    def vjp(g):
        gx = np.zeros_like(flat)
        gx[rows, idx.reshape(-1)] = g.reshape(-1)
        return (gx.reshape(a.shape),)

    return _node(data, (a,), vjp)


# ---------------------------------------------------------------------------
# softmax and losses


def _check_segments(total: int, segment_lengths) -> list[int]:
    lengths = [int(s) for s in segment_lengths]
    if any(s <= 0 for s in lengths):
        raise ConfigurationError(f"softmax segments must be non-empty, got {lengths}")
    if sum(lengths) != total:
        raise ShapeMismatchError("softmax segments", (total,), (sum(lengths),))
    return lengths


def segment_softmax(logits: Tensor, segment_lengths) -> Tensor:
    """Softmax applied independently to consecutive segments of the last axis.

    Each segment is shifted by its max before exponentiation, so adding a
    constant to a segment's logits leaves its probabilities unchanged.
    """
    lengths = _check_segments(logits.shape[-1], segment_lengths)
    data = np.empty_like(logits.data)
    start = 0
    for s in lengths:
        z = logits.data[..., start:start + s]
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        data[..., start:start + s] = e / e.sum(axis=-1, keepdims=True)
        start += s
    if not _tracked(logits):
        return Tensor(data)

    def vjp(g):
        gz = np.empty_like(data)
        start = 0
        for s in lengths:
            p = data[..., start:start + s]
            gs = g[..., start:start + s]
            gz[..., start:start + s] = p * (gs - (gs * p).sum(axis=-1, keepdims=True))
            start += s
        return (gz,)

    return _node(data, (logits,), vjp)


def factored_cross_entropy(
    predicted: Tensor,
    target,
    floor: float = CROSS_ENTROPY_FLOOR,
) -> tuple[Tensor, bool]:
    """Sum of per-row negative log-likelihoods under one-hot targets.

    ``predicted`` has shape (..., n, d) with row-stochastic final axis and
    ``target`` matches with one-hot rows.  The NLL is summed over the last two
    axes and averaged over any leading batch axes.  Probabilities below
    ``floor`` are clamped before the log (and the gradient is taken at the
    clamped value); the returned flag reports whether any clamp fired at a
    target index.
    """
    t = np.asarray(target, dtype=np.float64)
    p = predicted.data
    if p.shape != t.shape or p.ndim < 2:
        raise ShapeMismatchError("factored_cross_entropy", p.shape, t.shape)
    if not np.allclose(p.sum(axis=-1), 1.0, atol=1e-6):
        raise ValueError("factored_cross_entropy: predicted rows must sum to 1")
    row_sums = t.sum(axis=-1)
    if not (np.all((t == 0.0) | (t == 1.0)) and np.allclose(row_sums, 1.0)):
        raise ValueError("factored_cross_entropy: target rows must be one-hot")

    batch = int(np.prod(p.shape[:-2])) if p.ndim > 2 else 1
    clamped = np.maximum(p, floor)
    saturated = bool(np.any((t > 0) & (p < floor)))
    data = np.array(-(t * np.log(clamped)).sum() / batch)

    if not _tracked(predicted):
        return Tensor(data), saturated

    def vjp(g):
        return ((-t / clamped) * (float(g) / batch),)

    return _node(data, (predicted,), vjp), saturated
