"""Reverse-mode autodiff over row-major NumPy arrays.

A `Tensor` wraps a C-contiguous float32/float64 array. Operations return new
tensors that record their parents and a vector-Jacobian product, so the
tensors themselves form the computation graph: `backward` walks that graph
once in reverse topological order and accumulates `.grad` on every tensor
with `requires_grad`.

Layout contract: the flat index of coordinate (i0, ..., ik) in `data` is
sum(i_j * stride_j) with stride_j = prod(shape[j+1:]), i.e. NumPy C order.
Every operation materializes a contiguous result, so two runs over identical
inputs produce bit-identical arrays.

Thread-safety: operations are pure given their inputs; a graph built in one
thread must be walked by that thread.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from .errors import InvalidCallError, InvalidShapeError, NumericsError

_ALLOWED_DTYPES = (np.float32, np.float64)

_validation = False


@contextmanager
def validation_enabled():
    """Context in which non-finite inputs to softmax raise `NumericsError`."""
    global _validation
    prev = _validation
    _validation = True
    try:
        yield
    finally:
        _validation = prev


def _contig(arr: np.ndarray) -> np.ndarray:
    # np.ascontiguousarray would promote 0-d scalars to 1-d
    if arr.ndim == 0 or arr.flags["C_CONTIGUOUS"]:
        return arr
    return np.ascontiguousarray(arr)


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in _ALLOWED_DTYPES:
        arr = arr.astype(np.float32)
    return _contig(arr)


class Tensor:
    """A dense N-D float array plus optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, dtype=None) -> None:
        self.data = _as_array(data, dtype)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
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

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), dtype=self.data.dtype)

    def backward(self) -> None:
        backward(self)

    # operator sugar; the module-level functions are the primary surface
    def __add__(self, other):
        return add(self, other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype)))

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, self.dtype))
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *new_shape):
        if len(new_shape) == 1 and isinstance(new_shape[0], (tuple, list)):
            new_shape = tuple(new_shape[0])
        return reshape_permute(self, new_shape)

    def permute(self, *axis_order):
        if len(axis_order) == 1 and isinstance(axis_order[0], (tuple, list)):
            axis_order = tuple(axis_order[0])
        return reshape_permute(self, self.shape, axis_order)


def result_of(data: np.ndarray, parents: tuple[Tensor, ...],
              vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Build an op result, recording graph edges only when a parent needs grad."""
    out = Tensor(_contig(data), dtype=data.dtype)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._vjp = vjp
    return out


def _check_same_dtype(*tensors: Tensor) -> None:
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise InvalidShapeError(f"mixed dtypes {sorted(d.name for d in dtypes)}; cast explicitly")


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing NumPy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# primitives


def reshape_permute(t: Tensor, new_shape, axis_order=None) -> Tensor:
    """Reinterpret `t` as `new_shape` (row-major), then transpose by `axis_order`."""
    new_shape = tuple(int(s) for s in new_shape)
    if int(np.prod(new_shape, dtype=np.int64)) != t.size:
        raise InvalidShapeError(f"cannot reshape {t.shape} ({t.size} values) to {new_shape}")
    if axis_order is None:
        axis_order = tuple(range(len(new_shape)))
    axis_order = tuple(int(a) for a in axis_order)
    if sorted(axis_order) != list(range(len(new_shape))):
        raise InvalidShapeError(f"axis_order {axis_order} is not a permutation of {len(new_shape)} axes")
    out = t.data.reshape(new_shape).transpose(axis_order)
    inverse = np.argsort(axis_order)
    old_shape = t.shape

    def vjp(g):
        return (np.ascontiguousarray(g.transpose(inverse)).reshape(old_shape),)

    return result_of(out, (t,), vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum with NumPy broadcasting."""
    _check_same_dtype(a, b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise InvalidShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return result_of(out, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product with NumPy broadcasting."""
    _check_same_dtype(a, b)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise InvalidShapeError(f"cannot broadcast {a.shape} with {b.shape}") from exc
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return result_of(out, (a, b), vjp)


def scale(t: Tensor, factor: float) -> Tensor:
    """Multiply by a python scalar."""
    factor = t.data.dtype.type(factor)
    out = t.data * factor

    def vjp(g):
        return (g * factor,)

    return result_of(out, (t,), vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; leading batch axes must match exactly."""
    _check_same_dtype(a, b)
    if a.ndim < 2 or b.ndim < 2:
        raise InvalidShapeError("matmul needs at least 2-D operands")
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise InvalidShapeError(f"batch axes differ: {a.shape} vs {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise InvalidShapeError(f"inner extents differ: {a.shape} vs {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = np.matmul(g, b.data.swapaxes(-1, -2))
        gb = np.matmul(a.data.swapaxes(-1, -2), g)
        return ga, gb

    return result_of(out, (a, b), vjp)


def softmax_lastdim(t: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, computed with max subtraction."""
    if _validation and not np.isfinite(t.data).all():
        raise NumericsError("softmax input contains non-finite values")
    shifted = t.data - t.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return result_of(out, (t,), vjp)


def gelu(t: Tensor) -> Tensor:
    """Gaussian error linear unit, exact erf form."""
    x = t.data
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    out = (x * cdf).astype(x.dtype)

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
        return ((g * (cdf + x * pdf)).astype(x.dtype),)

    return result_of(out, (t,), vjp)


def mean_pool_hw(x: Tensor) -> Tensor:
    """Global average over the two trailing spatial axes: (B,C,H,W) -> (B,C)."""
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    b, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def vjp(g):
        gx = np.broadcast_to(g[:, :, None, None] / (h * w), (b, c, h, w))
        return (np.ascontiguousarray(gx.astype(x.dtype)),)

    return result_of(out, (x,), vjp)


def sum_all(t: Tensor) -> Tensor:
    """Sum of every element, as a 0-D tensor."""
    out = np.asarray(t.data.sum(), dtype=t.dtype)

    def vjp(g):
        return (np.full(t.shape, g, dtype=t.dtype),)

    return result_of(out, (t,), vjp)


def mean_all(t: Tensor) -> Tensor:
    """Mean of every element, as a 0-D tensor."""
    n = t.size
    out = np.asarray(t.data.mean(), dtype=t.dtype)

    def vjp(g):
        return (np.full(t.shape, g / n, dtype=t.dtype),)

    return result_of(out, (t,), vjp)


def gather_hw(x: Tensor, index_h: np.ndarray, index_w: np.ndarray) -> Tensor:
    """out[b,c,i,j] = x[b,c, index_h[i], index_w[j]] for bijective index maps."""
    if x.ndim != 4:
        raise InvalidShapeError(f"expected a 4-D feature map, got shape {x.shape}")
    _, _, h, w = x.shape
    index_h = np.asarray(index_h, dtype=np.int64)
    index_w = np.asarray(index_w, dtype=np.int64)
    if not (np.array_equal(np.sort(index_h), np.arange(h)) and
            np.array_equal(np.sort(index_w), np.arange(w))):
        raise InvalidShapeError("index maps must be permutations of the spatial extents")
    out = x.data[:, :, index_h[:, None], index_w[None, :]]

    def vjp(g):
        gx = np.empty_like(x.data)
        gx[:, :, index_h[:, None], index_w[None, :]] = g
        return (gx,)

    return result_of(out, (x,), vjp)


def cross_entropy_logits(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer `labels` under row-wise softmax of `logits`."""
    if logits.ndim != 2:
        raise InvalidShapeError(f"expected (batch, classes) logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, k = logits.shape
    if labels.shape != (n,):
        raise InvalidShapeError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= k:
        raise InvalidCallError("label out of range")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1)) + logits.data.max(axis=1)
    picked = logits.data[np.arange(n), labels]
    out = np.asarray((lse - picked).mean(), dtype=logits.dtype)
    probs = np.exp(shifted)
    probs /= probs.sum(axis=1, keepdims=True)

    def vjp(g):
        gl = probs.copy()
        gl[np.arange(n), labels] -= 1.0
        return ((g / n) * gl.astype(logits.dtype),)

    return result_of(out, (logits,), vjp)


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor) -> None:
    """Accumulate d loss / d t into `t.grad` for every reachable tensor with
    `requires_grad`. `loss` must be scalar; each graph node's vector-Jacobian
    product runs exactly once, in reverse topological order."""
    if loss.size != 1:
        raise InvalidCallError(f"backward needs a scalar loss, got shape {loss.shape}")
    # iterative DFS post-order; recursion would overflow on deep graphs
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))

    pending: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = pending.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node._vjp is None:
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in pending:
                pending[key] = pending[key] + pg
            else:
                pending[key] = pg


def zero_grads(params: Sequence[Tensor]) -> None:
    for p in params:
        p.grad = None
