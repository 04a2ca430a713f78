"""Reverse-mode automatic differentiation on numpy arrays.

Only the operations the pose-estimation model needs are implemented. Image
tensors are channels-last (B, H, W, C), which keeps convolution an im2col
matmul without layout shuffles. Graphs are built eagerly; calling
``backward()`` on a scalar fills ``grad`` on every reachable tensor that has
``requires_grad`` set. All reductions use numpy's fixed evaluation order, so
repeated runs produce bit-identical results.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False, parents=(), backward_fn=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += _unbroadcast(g, self.data.shape)

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() expects a scalar output")
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the original shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents), backward_fn=backward_fn)
    return Tensor(data)


# -- elementwise arithmetic -------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)
    return _node(out_data, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)
    return _node(out_data, (a, b), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)
    return _node(out_data, (a, b), bwd)


def square(a):
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(g * (2.0 * a.data))
    return _node(a.data * a.data, (a,), bwd)


def sqrt(a, floor: float = 0.0):
    """Square root; values are clamped below at `floor` before the root."""
    a = as_tensor(a)
    clipped = np.maximum(a.data, floor)
    out_data = np.sqrt(clipped)

    def bwd(g):
        if a.requires_grad:
            gate = a.data > floor
            denom = np.where(gate, out_data, 1.0)
            a._accumulate(np.where(gate, 0.5 * g / denom, 0.0))
    return _node(out_data, (a,), bwd)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def bwd(g):
        a._accumulate(g * out_data)
    return _node(out_data, (a,), bwd)


def log(a):
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(g / a.data)
    return _node(np.log(a.data), (a,), bwd)


def sin(a):
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(g * np.cos(a.data))
    return _node(np.sin(a.data), (a,), bwd)


def relu(a):
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def bwd(g):
        a._accumulate(g * (a.data > 0))
    return _node(out_data, (a,), bwd)


def sigmoid(a):
    a = as_tensor(a)
    out_data = 0.5 * (np.tanh(0.5 * a.data) + 1.0)

    def bwd(g):
        a._accumulate(g * out_data * (1.0 - out_data))
    return _node(out_data, (a,), bwd)


def softplus(a):
    """log(1 + exp(x)), numerically stable; gradient is sigmoid(x)."""
    a = as_tensor(a)
    out_data = np.logaddexp(0.0, a.data)

    def bwd(g):
        a._accumulate(g * (0.5 * (np.tanh(0.5 * a.data) + 1.0)))
    return _node(out_data, (a,), bwd)


def clip(a, lo: float, hi: float):
    a = as_tensor(a)
    out_data = np.clip(a.data, lo, hi)

    def bwd(g):
        a._accumulate(g * ((a.data > lo) & (a.data < hi)))
    return _node(out_data, (a,), bwd)


# -- reductions, reshapes, gathers -------------------------------------------

def tsum(a, axis=None, keepdims: bool = False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        gg = g
        if axis is not None and not keepdims:
            gg = np.expand_dims(gg, axis)
        a._accumulate(np.broadcast_to(gg, a.data.shape).copy())
    return _node(out_data, (a,), bwd)


def tmean(a, axis=None, keepdims: bool = False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(count))


def reshape(a, shape):
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(g.reshape(a.data.shape))
    return _node(a.data.reshape(shape), (a,), bwd)


def transpose2d(a):
    a = as_tensor(a)

    def bwd(g):
        a._accumulate(g.T)
    return _node(a.data.T, (a,), bwd)


def concat(tensors, axis: int = -1):
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])
    return _node(out_data, tuple(tensors), bwd)


def take(a, idx):
    """Fancy/basic indexing with scatter-add backward."""
    a = as_tensor(a)
    out_data = a.data[idx]

    def bwd(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, idx, g)
    return _node(out_data, (a,), bwd)


def gather_pixels(a, ys, xs):
    """Rows (N, C) gathered from an image tensor (H, W, C) at integer pixels."""
    a = as_tensor(a)
    out_data = a.data[ys, xs]

    def bwd(g):
        if a.requires_grad:
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, (ys, xs), g)
    return _node(out_data, (a,), bwd)


# -- linear algebra -----------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            b._accumulate(a.data.swapaxes(-1, -2) @ g)
    return _node(out_data, (a, b), bwd)


def l2_normalize(a, axis: int = -1, eps: float = 1e-12):
    """Rows scaled to unit norm; gradient stays orthogonal to the output."""
    a = as_tensor(a)
    norm = np.sqrt((a.data * a.data).sum(axis=axis, keepdims=True))
    norm = np.maximum(norm, eps)
    out_data = a.data / norm

    def bwd(g):
        proj = (g * out_data).sum(axis=axis, keepdims=True)
        a._accumulate((g - out_data * proj) / norm)
    return _node(out_data, (a,), bwd)


# -- convolution and resampling (channels-last) -------------------------------

def conv2d(x, w, b=None):
    """SAME-padded stride-1 correlation: x (B,H,W,C) * w (kh,kw,C,O) + b (O,)."""
    x, w = as_tensor(x), as_tensor(w)
    if b is not None:
        b = as_tensor(b)
    kh, kw, cin, cout = w.data.shape
    ph, pw = kh // 2, kw // 2
    bsz, h, wd, _ = x.data.shape
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))       # (B,H,W,C,kh,kw)
    cols = win.transpose(0, 1, 2, 4, 5, 3).reshape(bsz * h * wd, kh * kw * cin)
    out = cols @ w.data.reshape(kh * kw * cin, cout)
    out = out.reshape(bsz, h, wd, cout)
    if b is not None:
        out = out + b.data

    def bwd(g):
        gflat = g.reshape(bsz * h * wd, cout)
        if w.requires_grad:
            gw = cols.T @ gflat                                 # (kh*kw*C, O)
            w._accumulate(gw.reshape(kh, kw, cin, cout))
        if b is not None and b.requires_grad:
            b._accumulate(gflat.sum(axis=0))
        if x.requires_grad:
            # full correlation of g with the flipped kernel: (kh,kw,O,C)
            wf = w.data[::-1, ::-1].transpose(0, 1, 3, 2)
            gp = np.pad(g, ((0, 0), (ph, ph), (pw, pw), (0, 0)))
            gwin = sliding_window_view(gp, (kh, kw), axis=(1, 2))
            gcols = gwin.transpose(0, 1, 2, 4, 5, 3).reshape(bsz * h * wd, kh * kw * cout)
            gx = gcols @ wf.reshape(kh * kw * cout, cin)
            x._accumulate(gx.reshape(bsz, h, wd, cin))

    parents = (x, w) if b is None else (x, w, b)
    return _node(out, parents, bwd)


def avg_pool2(x):
    """2x2 average pooling; spatial dims must be even."""
    x = as_tensor(x)
    bsz, h, w, c = x.data.shape
    out_data = x.data.reshape(bsz, h // 2, 2, w // 2, 2, c).mean(axis=(2, 4))

    def bwd(g):
        gx = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        x._accumulate(gx)
    return _node(out_data, (x,), bwd)


def upsample2(x):
    """2x nearest-neighbour upsampling."""
    x = as_tensor(x)
    out_data = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def bwd(g):
        bsz, h2, w2, c = g.shape
        gx = g.reshape(bsz, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4))
        x._accumulate(gx)
    return _node(out_data, (x,), bwd)
