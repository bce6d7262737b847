"""Dense tensors with reverse-mode differentiation.

A fresh graph is recorded on every forward pass: each op returns a new
``Tensor`` that remembers its parents and a closure mapping the upstream
gradient to one gradient per parent. ``backward`` walks the graph once in
reverse topological order.

Forward values keep the dtype of their inputs, so a float64 copy of a model
replays exactly the same graph for finite-difference checks.
"""

from __future__ import annotations

from collections import Counter
from contextlib import contextmanager

import numpy as np
from scipy import sparse
from scipy.spatial import cKDTree

from ..errors import AxisOutOfRange, NotScalarLoss, ShapeMismatch

DEFAULT_DTYPE = np.float32

_backward_audit: Counter | None = None
_tape: "DecisionTape | None" = None


class DecisionTape:
    """Discrete choices (ReLU masks, argmax indices, matchings) of one forward pass.

    Recording stores them in op order; replaying feeds them back, so a
    perturbed forward pass evaluates the same smooth piece the gradient was
    taken on.
    """

    def __init__(self):
        self.items: list = []
        self.pos = 0
        self.replaying = False

    def signature(self) -> list:
        return [np.asarray(v).tobytes() for v in self.items]


def decision(compute):
    """Evaluate ``compute()``, or record/replay it when a tape is active."""
    if _tape is None:
        return compute()
    if _tape.replaying:
        if _tape.pos >= len(_tape.items):
            raise RuntimeError("replayed forward pass made more decisions than the recording")
        value = _tape.items[_tape.pos]
        _tape.pos += 1
        return value
    value = compute()
    _tape.items.append(value)
    return value


@contextmanager
def record_decisions():
    global _tape
    prev, _tape = _tape, DecisionTape()
    try:
        yield _tape
    finally:
        _tape = prev


@contextmanager
def replay_decisions(tape: DecisionTape):
    global _tape
    tape.pos, tape.replaying = 0, True
    prev, _tape = _tape, tape
    try:
        yield tape
    finally:
        _tape = prev
        tape.replaying = False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        if dtype is not None:
            arr = np.asarray(data, dtype=dtype)
        elif isinstance(data, (np.ndarray, np.generic)) and np.issubdtype(data.dtype, np.floating):
            # 0-d results of numpy arithmetic come back as scalars; keep their dtype
            arr = np.asarray(data)
        else:
            arr = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.parents: tuple = ()
        self.backward_fn = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self) -> int:
        return len(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum_reduce(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_reduce(self, axis, keepdims)

    def backward(self):
        backward(self)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype or DEFAULT_DTYPE))


def _make(data: np.ndarray, parents: tuple, backward_fn, op: str) -> Tensor:
    out = Tensor(data)
    out.op = op
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _axis(axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise AxisOutOfRange(f"axis {axis} out of range for {ndim}-d tensor")
    return axis % ndim


def _broadcast_shape(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _broadcast_shape(a, b)
    out = a.data / b.data

    def bw(g):
        gb = -g * out / b.data
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), bw, "div")


def neg(a: Tensor) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def relu(a: Tensor) -> Tensor:
    mask = decision(lambda: a.data > 0)

    def bw(g):
        return (g * mask,)

    return _make(np.where(mask, a.data, 0).astype(a.dtype), (a,), bw, "relu")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    return _make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def sin(a: Tensor) -> Tensor:
    return _make(np.sin(a.data), (a,), lambda g: (g * np.cos(a.data),), "sin")


def cos(a: Tensor) -> Tensor:
    return _make(np.cos(a.data), (a,), lambda g: (-g * np.sin(a.data),), "cos")


def arcosh(a: Tensor) -> Tensor:
    """Inverse hyperbolic cosine, defined for inputs >= 1."""
    x = a.data
    out = np.log(x + np.sqrt(x * x - 1))

    def bw(g):
        return (g / np.sqrt(x * x - 1),)

    return _make(out.astype(a.dtype), (a,), bw, "arcosh")


# ------------------------------------------------------------------ linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul of {a.shape} and {b.shape}")
    if b.ndim == 2:
        k, m = b.shape
        a2 = a.data.reshape(-1, k)
        out = (a2 @ b.data).reshape(a.shape[:-1] + (m,))

        def bw(g):
            g2 = g.reshape(-1, m)
            return (g2 @ b.data.T).reshape(a.shape), a2.T @ g2

        return _make(out, (a, b), bw, "matmul")
    try:
        out = a.data @ b.data
    except ValueError:
        raise ShapeMismatch(f"matmul of {a.shape} and {b.shape}") from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), bw, "matmul")


def pairwise_sqdist(p: Tensor, q: Tensor) -> Tensor:
    """``(N, M)`` squared distances between rows of ``p`` (N, d) and ``q`` (M, d)."""
    p, q = as_tensor(p), as_tensor(q)
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1]:
        raise ShapeMismatch(f"pairwise_sqdist of {p.shape} and {q.shape}")
    pd, qd = p.data, q.data
    out = (pd[:, None, 0] - qd[None, :, 0]) ** 2
    for ax in range(1, pd.shape[1]):
        out += (pd[:, None, ax] - qd[None, :, ax]) ** 2

    def bw(g):
        gp = 2 * (pd * g.sum(axis=1, keepdims=True) - g @ qd)
        gq = 2 * (qd * g.sum(axis=0)[:, None] - g.T @ pd)
        return gp, gq

    return _make(out, (p, q), bw, "pairwise_sqdist")


def nearest_sqdist(p: Tensor, q: Tensor) -> Tensor:
    """``(N,)`` squared distance from each row of ``p`` to its nearest row of ``q``.

    Same values as ``min_reduce(pairwise_sqdist(p, q), axis=1)`` without the
    dense matrix; the matching is found with a KD-tree and treated as locally
    constant for the gradient.
    """
    p, q = as_tensor(p), as_tensor(q)
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1] or len(q.data) == 0:
        raise ShapeMismatch(f"nearest_sqdist of {p.shape} and {q.shape}")
    match = decision(lambda: cKDTree(q.data.astype(np.float64)).query(p.data.astype(np.float64))[1])
    diff = p.data - q.data[match]
    out = (diff * diff).sum(axis=1)

    def bw(g):
        gp = 2 * g[:, None] * diff
        return gp, scatter_add_rows(-gp, match, q.shape[0])

    return _make(out, (p, q), bw, "nearest_sqdist")


# ------------------------------------------------------------------ shape ops


def reshape(a: Tensor, shape) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatch(f"cannot reshape {a.shape} to {shape}") from None
    return _make(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(_axis(x, a.ndim) for x in axes) != list(range(a.ndim)):
        raise AxisOutOfRange(f"bad permutation {axes} for {a.ndim}-d tensor")
    inv = np.argsort(axes)
    return _make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def slice_(a: Tensor, index) -> Tensor:
    """Basic (view) indexing: ints, slices, ``None`` and ``Ellipsis``."""
    out = a.data[index]

    def bw(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _make(out, (a,), bw, "slice")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ndim = tensors[0].ndim
    axis = _axis(axis, ndim)
    for t in tensors[1:]:
        if t.ndim != ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, tensors[0].shape)) if i != axis
        ):
            raise ShapeMismatch(f"concat of {[x.shape for x in tensors]} along {axis}")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), bw, "concat")


def gather_rows(a: Tensor, index) -> Tensor:
    """Index select along axis 0; ``index`` may have any shape."""
    index = np.asarray(index, dtype=np.int64)
    out = a.data[index]

    def bw(g):
        return (scatter_add_rows(g.reshape((-1,) + a.shape[1:]), index.reshape(-1), a.shape[0]),)

    return _make(out, (a,), bw, "gather_rows")


def scatter_add_rows(values: np.ndarray, index: np.ndarray, n_rows: int) -> np.ndarray:
    """``out[index[i]] += values[i]`` via a sparse selection matrix (much faster than ``np.add.at``)."""
    tail = values.shape[1:]
    flat = values.reshape(len(index), -1)
    sel = sparse.csr_matrix(
        (np.ones(len(index), dtype=values.dtype), (index, np.arange(len(index)))),
        shape=(n_rows, len(index)),
    )
    return np.asarray(sel @ flat, dtype=values.dtype).reshape((n_rows,) + tail)


def repeat_rows(a: Tensor, ratio: int) -> Tensor:
    """Each row repeated ``ratio`` times consecutively."""
    n = a.shape[0]

    def bw(g):
        return (g.reshape((n, ratio) + a.shape[1:]).sum(axis=1),)

    return _make(np.repeat(a.data, ratio, axis=0), (a,), bw, "repeat_rows")


# ------------------------------------------------------------------ reductions


def sum_reduce(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _make(np.asarray(out), (a,), bw, "sum")


def mean_reduce(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = a.data.size if axis is None else np.prod([a.shape[x] for x in np.atleast_1d(axis)])
    out = a.data.mean(axis=axis, keepdims=keepdims)
    scale = a.dtype.type(1.0 / count)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * scale, a.shape).copy(),)

    return _make(np.asarray(out), (a,), bw, "mean")


def _first_extreme(x: np.ndarray, axis: int, reduce) -> np.ndarray:
    """Index of the first extreme along a short axis.

    Matches ``np.argmax``/``np.argmin`` on finite input and avoids their slow
    strided path when ``axis`` is not the last one: take the fast reduction,
    then scan backwards so the lowest matching index is written last.
    """
    xs = np.moveaxis(x, axis, 0)
    best = reduce(xs, axis=0)
    idx = np.zeros(best.shape, dtype=np.int8)
    for i in range(xs.shape[0] - 1, 0, -1):
        np.copyto(idx, i, where=xs[i] == best)
    np.copyto(idx, 0, where=xs[0] == best)
    return idx


def _arg_reduce(a: Tensor, axis: int, keepdims: bool, pick, op: str):
    axis = _axis(axis, a.ndim)
    def locate():
        if a.ndim > 1 and axis != a.ndim - 1 and a.shape[axis] <= 64:
            return _first_extreme(a.data, axis, np.max if op == "max" else np.min).astype(np.intp)
        return pick(a.data, axis=axis)

    idx = np.expand_dims(decision(locate), axis)
    out = np.take_along_axis(a.data, idx, axis=axis)
    if not keepdims:
        out = out.squeeze(axis)

    def bw(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, idx, g if keepdims else np.expand_dims(g, axis), axis=axis)
        return (full,)

    return _make(out, (a,), bw, op), idx.squeeze(axis)


def max_reduce(a: Tensor, axis: int = -1, keepdims: bool = False, return_index: bool = False):
    """Maximum along ``axis``; the gradient flows only to the (first) argmax."""
    out, idx = _arg_reduce(a, axis, keepdims, np.argmax, "max")
    return (out, idx) if return_index else out


def min_reduce(a: Tensor, axis: int = -1, keepdims: bool = False, return_index: bool = False):
    out, idx = _arg_reduce(a, axis, keepdims, np.argmin, "min")
    return (out, idx) if return_index else out


# ------------------------------------------------------------------ normalization


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    axis = _axis(axis, a.ndim)
    if a.shape[axis] < 1:
        raise ShapeMismatch("softmax over an empty axis")
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (a,), bw, "softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    d = x.shape[-1]
    if d < 1 or gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch(f"layer_norm of {x.shape} with gamma {gamma.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        gx_hat = g * gamma.data
        gx = inv * (
            gx_hat
            - gx_hat.mean(axis=-1, keepdims=True)
            - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out.astype(x.dtype), (x, gamma, beta), bw, "layer_norm")


# ------------------------------------------------------------------ convolution


def conv2d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Channels-last 2-D convolution: ``x`` (B, H, W, Ci), ``w`` (kh, kw, Ci, Co)."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[3] != w.shape[2]:
        raise ShapeMismatch(f"conv2d of {x.shape} with kernel {w.shape}")
    b, h, wd, ci = x.shape
    kh, kw, _, co = w.shape
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv2d output would be empty for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    taps = [(dy, dx) for dy in range(kh) for dx in range(kw)]
    cols = np.concatenate(
        [
            xp[:, dy : dy + stride * (ho - 1) + 1 : stride, dx : dx + stride * (wo - 1) + 1 : stride, :]
            for dy, dx in taps
        ],
        axis=-1,
    ).reshape(-1, kh * kw * ci)
    w2 = w.data.reshape(kh * kw * ci, co)
    out = (cols @ w2).reshape(b, ho, wo, co)

    def bw(g):
        g2 = g.reshape(-1, co)
        gw = (cols.T @ g2).reshape(w.shape)
        gcols = (g2 @ w2.T).reshape(b, ho, wo, kh * kw, ci)
        gxp = np.zeros_like(xp)
        for t, (dy, dx) in enumerate(taps):
            gxp[:, dy : dy + stride * (ho - 1) + 1 : stride, dx : dx + stride * (wo - 1) + 1 : stride, :] += gcols[
                :, :, :, t, :
            ]
        return gxp[:, padding : padding + h, padding : padding + wd, :], gw

    return _make(out, (x, w), bw, "conv2d")


def conv1d(x: Tensor, w: Tensor, padding: int = 0) -> Tensor:
    """Channels-last 1-D convolution: ``x`` (B, L, Ci), ``w`` (k, Ci, Co), stride 1."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[2] != w.shape[1]:
        raise ShapeMismatch(f"conv1d of {x.shape} with kernel {w.shape}")
    b, length, ci = x.shape
    k, _, co = w.shape
    lo = length + 2 * padding - k + 1
    if lo < 1:
        raise ShapeMismatch(f"conv1d output would be empty for input {x.shape}")
    xp = np.pad(x.data, ((0, 0), (padding, padding), (0, 0)))
    cols = np.concatenate([xp[:, t : t + lo, :] for t in range(k)], axis=-1).reshape(-1, k * ci)
    w2 = w.data.reshape(k * ci, co)
    out = (cols @ w2).reshape(b, lo, co)

    def bw(g):
        g2 = g.reshape(-1, co)
        gw = (cols.T @ g2).reshape(w.shape)
        gcols = (g2 @ w2.T).reshape(b, lo, k, ci)
        gxp = np.zeros_like(xp)
        for t in range(k):
            gxp[:, t : t + lo, :] += gcols[:, :, t, :]
        return gxp[:, padding : padding + length, :], gw

    return _make(out, (x, w), bw, "conv1d")


# ------------------------------------------------------------------ backward


def _toposort(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf that requires it."""
    if loss.data.size != 1:
        raise NotScalarLoss(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if _backward_audit is not None:
            _backward_audit[id(node)] += 1
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


@contextmanager
def audit_backward():
    """Count how many times each interior node's backward rule runs."""
    global _backward_audit
    prev, _backward_audit = _backward_audit, Counter()
    try:
        yield _backward_audit
    finally:
        _backward_audit = prev
