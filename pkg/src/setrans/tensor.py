"""Dense tensors with reverse-mode automatic differentiation.

Every network activation and parameter is a `Tensor` wrapping a numpy
array (float64 in verification mode, float32 in training mode).  Each
differentiable operation records its input tensors and a backward closure
on its output; `Tensor.backward()` linearizes the recorded graph into a
tape (topological order, each node visited exactly once) and accumulates
gradients into every tracked tensor.  Gradients persist across backward
calls until explicitly cleared, so training loops must zero them between
steps.
"""

from __future__ import annotations

import contextlib

import numpy as np

from .errors import InputError, ShapeError

# When enabled, every op asserts its output is finite (debug runs only).
CHECK_FINITE = False

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (evaluation passes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """n-dimensional array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Reverse-mode differentiation from a scalar loss.

        Builds the tape (reverse topological order over recorded parents),
        seeds d(loss)/d(loss) = 1 and visits each recorded node exactly
        once.  The graph is torn down while walking it — every processed
        node drops its grad, closure and parent links, so activations are
        freed as soon as nothing downstream needs them.  Each recorded
        graph therefore supports exactly one backward pass.
        """
        if self.data.size != 1:
            raise InputError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        if self.requires_grad and self._op != "leaf" and self._backward is None:
            raise InputError("graph already released by a previous backward()")
        tape = self._tape()
        self.grad = np.ones_like(self.data)
        for i, node in enumerate(tape):
            node._backward()
            if node is not self:
                # Intermediate grads are only needed while walking the tape.
                node.grad = None
            node._backward = None
            node._parents = ()
            tape[i] = None

    def _tape(self):
        """Reverse topological order of every recorded node above self."""
        order: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        # order is now topological (inputs first); backward walks it reversed,
        # skipping leaves (they have no closure).
        return [n for n in reversed(order) if n._backward is not None]

    # -- operator sugar (compose losses and small expressions) --

    def __add__(self, other):
        return add(self, _wrap(other, self.dtype))

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(_wrap(other, self.dtype)))

    def __rsub__(self, other):
        return add(_wrap(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, _wrap(other, self.dtype))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other, self.dtype))

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, axes):
        return transpose(self, axes)


def _wrap(x, dtype):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _accumulate(t: Tensor, g: np.ndarray):
    # Gradient arrays are never mutated in place anywhere in this module,
    # so adopting the incoming array (which may alias an upstream grad or
    # be a broadcast view) is safe and avoids large defensive copies.
    if t.grad is None:
        t.grad = g if g.dtype == t.data.dtype else g.astype(t.data.dtype)
    else:
        t.grad = t.grad + g


def _make(data: np.ndarray, parents, op: str) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise InputError(f"non-finite values produced by op '{op}'")
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    out._op = op
    if track:
        out._parents = tuple(parents)
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient back down to `shape` (inverse of numpy broadcasting)."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gd, sd) in enumerate(zip(g.shape, shape)) if sd == 1 and gd != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise / structural primitives
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data + b.data, (a, b), "add")
    if out.requires_grad:
        def bw():
            if a.requires_grad:
                _accumulate(a, _unbroadcast(out.grad, a.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(out.grad, b.shape))
        out._backward = bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = _make(a.data * b.data, (a, b), "mul")
    if out.requires_grad:
        def bw():
            if a.requires_grad:
                _accumulate(a, _unbroadcast(out.grad * b.data, a.shape))
            if b.requires_grad:
                _accumulate(b, _unbroadcast(out.grad * a.data, b.shape))
        out._backward = bw
    return out


def neg(a: Tensor) -> Tensor:
    out = _make(-a.data, (a,), "neg")
    if out.requires_grad:
        def bw():
            _accumulate(a, -out.grad)
        out._backward = bw
    return out


def reshape(a: Tensor, shape) -> Tensor:
    out = _make(a.data.reshape(shape), (a,), "reshape")
    if out.requires_grad:
        def bw():
            _accumulate(a, out.grad.reshape(a.shape))
        out._backward = bw
    return out


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    out = _make(np.ascontiguousarray(a.data.transpose(axes)), (a,), "transpose")
    if out.requires_grad:
        inv = tuple(np.argsort(axes))
        def bw():
            _accumulate(a, out.grad.transpose(inv))
        out._backward = bw
    return out


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out = _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), "sum")
    if out.requires_grad:
        def bw():
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.shape))
        out._backward = bw
    return out


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    count = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))]
    )
    out = _make(a.data.mean(axis=axis, keepdims=keepdims), (a,), "mean")
    if out.requires_grad:
        def bw():
            g = out.grad / count
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            _accumulate(a, np.broadcast_to(g, a.shape))
        out._backward = bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2 if b.data.ndim > 1 else 0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out = _make(a.data @ b.data, (a, b), "matmul")
    if out.requires_grad:
        def bw():
            g = out.grad
            if a.requires_grad:
                ga = g @ b.data.swapaxes(-1, -2)
                _accumulate(a, _unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = a.data.swapaxes(-1, -2) @ g
                _accumulate(b, _unbroadcast(gb, b.shape))
        out._backward = bw
    return out


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def relu(a: Tensor) -> Tensor:
    out = _make(np.maximum(a.data, 0), (a,), "relu")
    if out.requires_grad:
        def bw():
            _accumulate(a, out.grad * (a.data > 0))
        out._backward = bw
    return out


def sigmoid(a: Tensor) -> Tensor:
    # Stable in both tails: exp never sees a positive argument.
    x = a.data
    s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                 np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = _make(s, (a,), "sigmoid")
    if out.requires_grad:
        def bw():
            _accumulate(a, out.grad * s * (1.0 - s))
        out._backward = bw
    return out


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), computed as max(x,0) + log1p(e^-|x|)."""
    x = a.data
    out = _make(np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x))), (a,), "softplus")
    if out.requires_grad:
        def bw():
            s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                         np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
            _accumulate(a, out.grad * s)
        out._backward = bw
    return out


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)
    out = _make(s, (a,), "softmax")
    if out.requires_grad:
        def bw():
            g = out.grad
            _accumulate(a, s * (g - (g * s).sum(axis=axis, keepdims=True)))
        out._backward = bw
    return out


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    ls = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = _make(ls, (a,), "log_softmax")
    if out.requires_grad:
        def bw():
            g = out.grad
            _accumulate(a, g - np.exp(ls) * g.sum(axis=axis, keepdims=True))
        out._backward = bw
    return out


# ---------------------------------------------------------------------------
# linear algebra layers
# ---------------------------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: x @ w (+ b), w of shape (din, dout)."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input dim {x.shape[-1]} != weight dim {w.shape[0]}")
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    var = d.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out = _make(xhat * gamma.data + beta.data, (x, gamma, beta), "layer_norm")
    if out.requires_grad:
        n = d.shape[-1]
        def bw():
            g = out.grad
            if gamma.requires_grad:
                _accumulate(gamma, (g * xhat).sum(axis=tuple(range(d.ndim - 1))))
            if beta.requires_grad:
                _accumulate(beta, g.sum(axis=tuple(range(d.ndim - 1))))
            if x.requires_grad:
                gx = g * gamma.data
                _accumulate(x, inv * (gx - gx.mean(axis=-1, keepdims=True)
                                      - xhat * (gx * xhat).mean(axis=-1, keepdims=True)))
        out._backward = bw
    return out


# ---------------------------------------------------------------------------
# convolution / pooling / normalization over (B, C, T, F) maps
# ---------------------------------------------------------------------------

def _conv_patches(xp_n: np.ndarray, buf: np.ndarray, t: int, f: int):
    """Fill buf (9, Cin, T*F) with the 3x3 neighborhoods of one padded map.

    xp_n is one sample, channels-first with 1-pixel zero padding:
    (Cin, T+2, F+2).  Row (dy*3+dx, ci) of the result holds channel ci
    shifted by the kernel offset (dy, dx), flattened.
    """
    cin = xp_n.shape[0]
    for dy in range(3):
        for dx in range(3):
            buf[dy * 3 + dx] = xp_n[:, dy:dy + t, dx:dx + f].reshape(cin, t * f)
    return buf.reshape(9 * cin, t * f)


def conv2d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """3x3 same-convolution with zero padding 1 on both spatial axes.

    x: (B, Cin, T, F), kernel: (Cout, Cin, 3, 3), bias: (Cout,).
    Each sample's neighborhoods are gathered into a (9*Cin, T*F) patch
    matrix and hit with one (Cout, 9*Cin) GEMM, producing the output map
    directly in channels-first layout — no transposes anywhere.  Working
    per sample bounds the patch buffer to one map's worth; the backward
    pass rebuilds patches instead of caching them.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError("conv2d expects x (B,Cin,T,F) and kernel (Cout,Cin,3,3)")
    if kernel.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d kernel must be 3x3, got {kernel.shape[2:]}")
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[1]}, kernel expects {kernel.shape[1]}"
        )
    b_, cin, t, f = x.shape
    cout = kernel.shape[0]
    # (Cout, 9*Cin) with columns ordered (offset, channel) to match patches
    k2d = np.ascontiguousarray(kernel.data.transpose(0, 2, 3, 1).reshape(cout, 9 * cin))

    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    buf = np.empty((9, cin, t * f), dtype=x.dtype)
    out_data = np.empty((b_, cout, t, f), dtype=x.dtype)
    out_flat = out_data.reshape(b_, cout, t * f)
    for n in range(b_):
        patches = _conv_patches(xp[n], buf, t, f)
        np.matmul(k2d, patches, out=out_flat[n])
    if bias is not None:
        out_data += bias.data[None, :, None, None]

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    out = _make(out_data, parents, "conv2d")
    if out.requires_grad:
        def bw():
            g = out.grad
            if bias is not None and bias.requires_grad:
                _accumulate(bias, np.einsum("bctf->c", g))
            dk2d = np.zeros_like(k2d) if kernel.requires_grad else None
            dx = np.empty_like(x.data) if x.requires_grad else None
            wbuf = np.empty((9, cin, t * f), dtype=x.dtype)
            dcols = np.empty((9 * cin, t * f), dtype=g.dtype) if dx is not None else None
            dxp_n = (np.zeros((cin, t + 2, f + 2), dtype=g.dtype)
                     if x.requires_grad else None)
            kt = np.ascontiguousarray(k2d.T) if dx is not None else None
            for n in range(b_):
                g_flat = g[n].reshape(cout, t * f)
                if dk2d is not None:
                    patches = _conv_patches(xp[n], wbuf, t, f)
                    dk2d += g_flat @ patches.T
                if dx is not None:
                    np.matmul(kt, g_flat, out=dcols)
                    shifted = dcols.reshape(9, cin, t, f)
                    dxp_n[...] = 0.0
                    for dy in range(3):
                        for dxo in range(3):
                            dxp_n[:, dy:dy + t, dxo:dxo + f] += shifted[dy * 3 + dxo]
                    dx[n] = dxp_n[:, 1:t + 1, 1:f + 1]
            if dk2d is not None:
                _accumulate(kernel, dk2d.reshape(cout, 3, 3, cin).transpose(0, 3, 1, 2))
            if dx is not None:
                _accumulate(x, dx)
        out._backward = bw
    return out


def batch_norm2d(x: Tensor, gamma: Tensor, beta: Tensor,
                 running_mean: np.ndarray, running_var: np.ndarray,
                 training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """Per-channel batch normalization over (B, T, F).

    Train mode standardizes with batch statistics (biased variance) and
    updates the running buffers in place with the given momentum; eval mode
    standardizes with the running buffers.
    """
    if x.data.ndim != 4:
        raise ShapeError("batch_norm2d expects (B,C,T,F)")
    d = x.data
    n = d.shape[0] * d.shape[2] * d.shape[3]
    if training:
        if n < 2:
            raise InputError(
                "batch_norm2d: train mode needs at least 2 elements per channel"
            )
        mu = d.mean(axis=(0, 2, 3))
        var = d.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mu = running_mean.astype(d.dtype)
        var = running_var.astype(d.dtype)
    inv = (1.0 / np.sqrt(var + eps)).astype(d.dtype)
    xhat = d - mu[None, :, None, None].astype(d.dtype)
    xhat *= inv[None, :, None, None]
    out_data = xhat * gamma.data[None, :, None, None]
    out_data += beta.data[None, :, None, None]
    out = _make(out_data, (x, gamma, beta), "batch_norm2d")
    if out.requires_grad:
        def bw():
            g = out.grad
            sum_g = np.einsum("bctf->c", g)
            sum_gx = np.einsum("bctf,bctf->c", g, xhat)
            if gamma.requires_grad:
                _accumulate(gamma, sum_gx)
            if beta.requires_grad:
                _accumulate(beta, sum_g)
            if x.requires_grad:
                gg = g * gamma.data[None, :, None, None]
                if training:
                    # reductions of gg reuse the per-channel sums of g
                    m1 = (gamma.data * sum_g / n)[None, :, None, None]
                    m2 = (gamma.data * sum_gx / n)[None, :, None, None]
                    gg -= m1
                    gg -= xhat * m2
                gg *= inv[None, :, None, None]
                _accumulate(x, gg)
        out._backward = bw
    return out


def avg_pool2d(x: Tensor) -> Tensor:
    """2x2 mean pooling; both spatial dims must be even."""
    if x.data.ndim != 4:
        raise ShapeError("avg_pool2d expects (B,C,T,F)")
    b_, c, t, f = x.shape
    if t % 2 or f % 2:
        raise ShapeError(f"avg_pool2d needs even spatial dims, got ({t},{f})")
    out_data = x.data.reshape(b_, c, t // 2, 2, f // 2, 2).mean(axis=(3, 5))
    out = _make(out_data, (x,), "avg_pool2d")
    if out.requires_grad:
        def bw():
            # scale the quarter-size grad before expanding it
            g = np.repeat(np.repeat(out.grad * 0.25, 2, axis=2), 2, axis=3)
            _accumulate(x, g)
        out._backward = bw
    return out


def adaptive_avg_pool2d(x: Tensor, t_bins: int) -> Tensor:
    """Pool (B,C,T',F') to (B,C,t_bins,1).

    The time axis is split into t_bins contiguous bins with boundaries
    floor(i*T'/t_bins); the frequency axis is averaged entirely.
    """
    if x.data.ndim != 4:
        raise ShapeError("adaptive_avg_pool2d expects (B,C,T,F)")
    b_, c, t, f = x.shape
    if t < t_bins:
        raise ShapeError(f"adaptive_avg_pool2d: time dim {t} < {t_bins} bins")
    bounds = [(i * t) // t_bins for i in range(t_bins + 1)]
    out_data = np.empty((b_, c, t_bins, 1), dtype=x.dtype)
    for i in range(t_bins):
        out_data[:, :, i, 0] = x.data[:, :, bounds[i]:bounds[i + 1], :].mean(axis=(2, 3))
    out = _make(out_data, (x,), "adaptive_avg_pool2d")
    if out.requires_grad:
        def bw():
            gx = np.zeros_like(x.data)
            for i in range(t_bins):
                span = bounds[i + 1] - bounds[i]
                gx[:, :, bounds[i]:bounds[i + 1], :] = (
                    out.grad[:, :, i, :, None].reshape(b_, c, 1, 1) / (span * f)
                )
            _accumulate(x, gx)
        out._backward = bw
    return out


def max_over_time(x: Tensor) -> Tensor:
    """Elementwise max over the middle axis of (B, T, C).

    Gradient flows only to the first maximizing time index per (b, c).
    """
    if x.data.ndim != 3:
        raise ShapeError("max_over_time expects (B,T,C)")
    idx = x.data.argmax(axis=1)  # first max on ties
    out_data = np.take_along_axis(x.data, idx[:, None, :], axis=1)[:, 0, :]
    out = _make(out_data, (x,), "max_over_time")
    if out.requires_grad:
        def bw():
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, idx[:, None, :], out.grad[:, None, :], axis=1)
            _accumulate(x, gx)
        out._backward = bw
    return out
