"""Reverse-mode autodiff over numpy arrays.

Only the operations the tracker and its loss actually need are implemented.
Each op records its parents and a backward closure on the implicit tape
(the graph itself); `backward()` replays the tape in reverse topological
order, accumulating gradients additively at fan-out points. There is no
general broadcasting machinery beyond what the model uses, which keeps
every backward rule short enough to audit by hand.

A thread-local switch (`no_grad`) disables recording for inference.
Convolutions run in NHWC layout via im2col so the heavy lifting is a
single GEMM per layer.
"""

from __future__ import annotations

import math
import threading
from contextlib import contextmanager

import numpy as np


class ShapeMismatch(ValueError):
    """Raised when operand shapes are incompatible; message names both shapes."""


_state = threading.local()

_DEBUG_CHECKS = False


def set_debug_checks(enabled: bool) -> None:
    """Assert finiteness of every forward result (slow; for tests)."""
    global _DEBUG_CHECKS
    _DEBUG_CHECKS = bool(enabled)


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad():
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


class Tensor:
    """An array node on the tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- graph construction -------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        # backward closures always hand over fresh (or never-mutated) arrays,
        # and all consumers replace rather than mutate, so no defensive copy
        if self.grad is None:
            self.grad = g if isinstance(g, np.ndarray) else np.asarray(g)
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Backpropagate from a scalar loss through the recorded tape."""
        if self.data.shape != ():
            raise ValueError(f"backward() requires a scalar loss, got shape {self.data.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple["Tensor", bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
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
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- operator sugar ------------------------------------------------------

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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not part of the op set; divide by a scalar")
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple, backward) -> Tensor:
    """Wrap an op result, recording the backward closure when grad is on."""
    if _DEBUG_CHECKS and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite values produced by a forward op")
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a gradient back to the shape of a broadcast operand."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise and linear algebra ---------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeMismatch(f"add: cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError:
        raise ShapeMismatch(f"sub: cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(data, (a, b), backward)


def mul(a, b) -> Tensor:
    if not isinstance(b, Tensor) and np.isscalar(b):
        a = as_tensor(a)
        scalar = float(b)
        data = a.data * scalar

        def backward_scalar(g):
            a._accumulate(g * scalar)

        return _make(data, (a,), backward_scalar)
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeMismatch(f"mul: cannot broadcast {a.shape} with {b.shape}") from None

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), backward)


def matmul(a, b) -> Tensor:
    """Stacked matrix product (..., m, k) @ (..., k, n); leading dims broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch(f"matmul requires >=2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), backward)


def relu(x) -> Tensor:
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0)

    def backward(g):
        x._accumulate(g * (x.data > 0.0))

    return _make(data, (x,), backward)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    s = _sigmoid(x.data)

    def backward(g):
        x._accumulate(g * s * (1.0 - s))

    return _make(s, (x,), backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    t = np.tanh(x.data)

    def backward(g):
        x._accumulate(g * (1.0 - t * t))

    return _make(t, (x,), backward)


def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        x._accumulate(s * (g - dot))

    return _make(s, (x,), backward)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ShapeMismatch(
            f"layer_norm: gain/bias {gain.shape}/{bias.shape} must match last dim of {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    data = xhat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gy = g * gain.data
            m1 = gy.mean(axis=-1, keepdims=True)
            m2 = (gy * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gy - m1 - xhat * m2))

    return _make(data, (x, gain, bias), backward)


# -- shape ops -------------------------------------------------------------


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return _make(data, tuple(tensors), backward)


def getitem(x, key) -> Tensor:
    """Basic indexing only (ints/slices/ellipsis): no element repeats, so the
    backward scatter is a plain strided add."""
    x = as_tensor(x)
    data = x.data[key]

    def backward(g):
        full = np.zeros_like(x.data)
        full[key] += g
        x._accumulate(full)

    return _make(data, (x,), backward)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    data = x.data.reshape(shape)

    def backward(g):
        x._accumulate(g.reshape(x.shape))

    return _make(data, (x,), backward)


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    data = x.data.transpose(axes)
    inv = np.argsort(axes)

    def backward(g):
        x._accumulate(g.transpose(inv))

    return _make(data, (x,), backward)


def sum_(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            x._accumulate(np.broadcast_to(g, x.shape).copy() if np.ndim(g) else np.full(x.shape, g, dtype=x.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg, x.shape))

    return _make(data, (x,), backward)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    data = x.data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = 1
        for ax in axes:
            count *= x.shape[ax]

    def backward(g):
        scale = 1.0 / count
        if axis is None:
            x._accumulate(np.full(x.shape, float(g) * scale, dtype=x.dtype))
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            x._accumulate(np.broadcast_to(gg * scale, x.shape))

    return _make(data, (x,), backward)


# -- convolution stack -----------------------------------------------------


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int):
    """(B, H, W, C) -> (B, OH, OW, kh*kw*C) patches; rows match weight layout (kh, kw, C).

    Built by kh*kw strided copies, which beats a 6-D transposed reshape.
    """
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    b, h, w, c = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    patches = np.empty((b, oh, ow, kh, kw, c), dtype=x.dtype)
    for a in range(kh):
        for bb in range(kw):
            patches[:, :, :, a, bb] = x[:, a : a + oh * stride : stride, bb : bb + ow * stride : stride]
    return patches.reshape(b, oh, ow, kh * kw * c), oh, ow


def _col2im(dxp: np.ndarray, shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add (B, OH, OW, kh, kw, C) patch grads back onto the input grid."""
    b, h, w, c = shape
    oh, ow = dxp.shape[1], dxp.shape[2]
    dx = np.zeros((b, h + 2 * pad, w + 2 * pad, c), dtype=dxp.dtype)
    for a in range(kh):
        for bb in range(kw):
            dx[:, a : a + oh * stride : stride, bb : bb + ow * stride : stride] += dxp[:, :, :, a, bb]
    return dx[:, pad : pad + h, pad : pad + w] if pad else dx


def conv2d(x, w, b=None, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution in NHWC with weights (kh, kw, Cin, Cout).

    The padded spatial extent must tile exactly ((H + 2p - kh) divisible by
    stride); the model only uses geometries where it does.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d expects NHWC input and (kh,kw,Cin,Cout) weight, got {x.shape}, {w.shape}")
    kh, kw, cin, cout = w.shape
    if x.shape[3] != cin:
        raise ShapeMismatch(f"conv2d: input channels {x.shape} do not match weight {w.shape}")
    if (x.shape[1] + 2 * pad - kh) % stride or (x.shape[2] + 2 * pad - kw) % stride:
        raise ShapeMismatch(f"conv2d: geometry {x.shape} with k={kh},{kw} s={stride} p={pad} does not tile")
    bsz = x.shape[0]
    patches, oh, ow = _im2col(x.data, kh, kw, stride, pad)
    wmat = w.data.reshape(kh * kw * cin, cout)
    out = patches.reshape(-1, kh * kw * cin) @ wmat
    out = out.reshape(bsz, oh, ow, cout)
    bias = as_tensor(b) if b is not None else None
    if bias is not None:
        out = out + bias.data

    def backward(g):
        gmat = g.reshape(-1, cout)
        if w.requires_grad:
            gw = patches.reshape(-1, kh * kw * cin).T @ gmat
            w._accumulate(gw.reshape(w.shape))
        if bias is not None and bias.requires_grad:
            bias._accumulate(gmat.sum(axis=0))
        if x.requires_grad:
            dxp = (gmat @ wmat.T).reshape(bsz, oh, ow, kh, kw, cin)
            x._accumulate(_col2im(dxp, x.shape, kh, kw, stride, pad))

    parents = (x, w) if bias is None else (x, w, bias)
    return _make(out, parents, backward)


def upsample2x(x) -> Tensor:
    """Nearest-neighbor 2x spatial upsampling for NHWC."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeMismatch(f"upsample2x expects NHWC, got {x.shape}")
    data = x.data.repeat(2, axis=1).repeat(2, axis=2)

    def backward(g):
        b, h2, w2, c = g.shape
        x._accumulate(g.reshape(b, h2 // 2, 2, w2 // 2, 2, c).sum(axis=(2, 4)))

    return _make(data, (x,), backward)


def avgpool(x, k: int) -> Tensor:
    """Non-overlapping k x k average pooling for NHWC; extent must divide."""
    x = as_tensor(x)
    b, h, w, c = x.shape
    if h % k or w % k:
        raise ShapeMismatch(f"avgpool: {x.shape} not divisible by {k}")
    data = x.data.reshape(b, h // k, k, w // k, k, c).mean(axis=(2, 4))

    def backward(g):
        gg = np.repeat(np.repeat(g, k, axis=1), k, axis=2) / (k * k)
        x._accumulate(gg)

    return _make(data, (x,), backward)


# -- fused losses ----------------------------------------------------------


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def weighted_bce_with_logits(logits, targets: np.ndarray, alpha) -> Tensor:
    """Mean of alpha*T*(-log sig(M)) + (1-T)*(-log(1-sig(M))), fused for stability.

    `targets` and `alpha` are constants (no gradient); `alpha` may be a
    scalar or broadcastable array for per-sample balancing.
    """
    logits = as_tensor(logits)
    t = np.asarray(targets, dtype=logits.dtype)
    if t.shape != logits.shape:
        raise ShapeMismatch(f"bce: target shape {t.shape} differs from logits {logits.shape}")
    a = np.asarray(alpha, dtype=logits.dtype)
    m = logits.data
    elem = a * t * _softplus(-m) + (1.0 - t) * _softplus(m)
    data = elem.mean(dtype=logits.dtype)
    n = elem.size

    def backward(g):
        sig = _sigmoid(m)
        logits._accumulate((float(g) / n) * (-a * t * (1.0 - sig) + (1.0 - t) * sig))

    return _make(np.asarray(data, dtype=logits.dtype), (logits,), backward)


def scaled_dot_attention(q, k, v) -> Tensor:
    """softmax(Q K^T / sqrt(d)) V over the last two axes; leading axes stack."""
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    d = q.shape[-1]
    scores = matmul(q, transpose(k, tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)))
    weights = softmax(mul(scores, 1.0 / math.sqrt(d)), axis=-1)
    return matmul(weights, v)
