"""Reverse-mode autodiff on dense numpy arrays.

Feature maps follow the (batch, channels, height, width) layout. Every op
is a pure function of its inputs: the forward result is computed eagerly
and a backward closure is recorded on the output tensor. Calling
``backward()`` on a scalar result walks the recorded graph once in reverse
topological order and accumulates gradients into every reachable tensor
with ``requires_grad=True``.
"""

from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

DEFAULT_DTYPE = np.float64

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (forward-only evaluation)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """Numpy array plus gradient slot and a link into the autodiff graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_done", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=DEFAULT_DTYPE if not isinstance(data, np.ndarray) else data.dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._done = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        if self.size != 1:
            raise ValueError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def backward(self):
        """Populate ``grad`` on every reachable requires_grad tensor.

        Only valid on scalar results, once per forward pass.
        """
        if self.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        if self._done:
            raise RuntimeError("backward already called on this graph; rebuild the forward pass first")
        self._done = True

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

    def _accumulate(self, g: np.ndarray):
        # Views are copied; owned arrays are safe to share since grads are
        # never mutated in place.
        if self.grad is None:
            self.grad = g if g.base is None else g.copy()
        else:
            self.grad = self.grad + g

    # Operator sugar; scalars are plain Python numbers.
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"


def as_tensor(x, requires_grad: bool = False) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, requires_grad=requires_grad)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    """Wrap an op result; record the backward closure when grad is live."""
    track = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=track)
    if track:
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# Elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ValueError(f"add: shape mismatch {a.shape} vs {b.shape}")
        out_data = a.data + b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(g)

        return _make(out_data, (a, b), bwd)
    c = float(b)
    out_data = a.data + c

    def bwd_s(g):
        if a.requires_grad:
            a._accumulate(g)

    return _make(out_data, (a,), bwd_s)


def sub(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ValueError(f"sub: shape mismatch {a.shape} vs {b.shape}")
        out_data = a.data - b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g)
            if b.requires_grad:
                b._accumulate(-g)

        return _make(out_data, (a, b), bwd)
    return add(a, -float(b))


def mul(a: Tensor, b) -> Tensor:
    if isinstance(b, Tensor):
        if a.shape != b.shape:
            raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
        out_data = a.data * b.data

        def bwd(g):
            if a.requires_grad:
                a._accumulate(g * b.data)
            if b.requires_grad:
                b._accumulate(g * a.data)

        return _make(out_data, (a, b), bwd)
    c = float(b)
    out_data = a.data * c

    def bwd_s(g):
        if a.requires_grad:
            a._accumulate(g * c)

    return _make(out_data, (a,), bwd_s)


def div(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"div: shape mismatch {a.shape} vs {b.shape}")
    out_data = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g / b.data)
        if b.requires_grad:
            b._accumulate(-g * a.data / (b.data * b.data))

    return _make(out_data, (a, b), bwd)


def reciprocal(x: Tensor) -> Tensor:
    out_data = 1.0 / x.data

    def bwd(g):
        if x.requires_grad:
            x._accumulate(-g / (x.data * x.data))

    return _make(out_data, (x,), bwd)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * (x.data > 0.0))

    return _make(out_data, (x,), bwd)


def softplus(x: Tensor) -> Tensor:
    out_data = np.logaddexp(0.0, x.data)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g * expit(x.data))

    return _make(out_data, (x,), bwd)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum())

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.full(x.shape, float(g), dtype=x.dtype))

    return _make(out_data, (x,), bwd)


def power_penalty(x: Tensor, p: int, mask: Optional[Tensor] = None) -> Tensor:
    """Separable penalty sum_i mask_i * |x_i|**p, p in {1, 2}.

    The p=1 subgradient at 0 is taken as 0.
    """
    if p not in (1, 2):
        raise ValueError(f"power_penalty: p must be 1 or 2, got {p}")
    m = None
    if mask is not None:
        m = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
        if m.shape != x.shape:
            raise ValueError(f"power_penalty: mask shape {m.shape} != data shape {x.shape}")
    if p == 1:
        terms = np.abs(x.data)
    else:
        terms = x.data * x.data
    if m is not None:
        terms = terms * m
    out_data = np.asarray(terms.sum())

    def bwd(g):
        if not x.requires_grad:
            return
        gs = float(g)
        if p == 1:
            local = np.sign(x.data)
        else:
            local = 2.0 * x.data
        if m is not None:
            local = local * m
        x._accumulate(gs * local)

    return _make(out_data, (x,), bwd)


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 4 or b.data.ndim != 4:
        raise ValueError("concat_channels expects rank-4 tensors")
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"concat_channels: incompatible shapes {a.shape} vs {b.shape}")
    ca = a.shape[1]
    out_data = np.concatenate([a.data, b.data], axis=1)

    def bwd(g):
        if a.requires_grad:
            a._accumulate(g[:, :ca])
        if b.requires_grad:
            b._accumulate(g[:, ca:])

    return _make(out_data, (a, b), bwd)


def slice_channels(x: Tensor, lo: int, hi: int) -> Tensor:
    out_data = x.data[:, lo:hi].copy()

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[:, lo:hi] = g
            x._accumulate(full)

    return _make(out_data, (x,), bwd)


def mean_channels(x: Tensor) -> Tensor:
    """Average over the channel axis; output has a single channel."""
    c = x.shape[1]
    out_data = x.data.mean(axis=1, keepdims=True)

    def bwd(g):
        if x.requires_grad:
            x._accumulate(np.repeat(g / c, c, axis=1))

    return _make(out_data, (x,), bwd)


def upsample_nearest2x(x: Tensor) -> Tensor:
    out_data = np.repeat(np.repeat(x.data, 2, axis=2), 2, axis=3)

    def bwd(g):
        if x.requires_grad:
            b, c, h, w = x.shape
            x._accumulate(g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _make(out_data, (x,), bwd)


def pad_edge1(x: Tensor) -> Tensor:
    """Replicate-pad by one pixel on each spatial border."""
    out_data = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)), mode="edge")

    def bwd(g):
        if not x.requires_grad:
            return
        h, w = x.shape[2], x.shape[3]
        dx = g[:, :, 1 : h + 1, 1 : w + 1].copy()
        dx[:, :, 0, :] += g[:, :, 0, 1 : w + 1]
        dx[:, :, -1, :] += g[:, :, h + 1, 1 : w + 1]
        dx[:, :, :, 0] += g[:, :, 1 : h + 1, 0]
        dx[:, :, :, -1] += g[:, :, 1 : h + 1, w + 1]
        dx[:, :, 0, 0] += g[:, :, 0, 0]
        dx[:, :, 0, -1] += g[:, :, 0, w + 1]
        dx[:, :, -1, 0] += g[:, :, h + 1, 0]
        dx[:, :, -1, -1] += g[:, :, h + 1, w + 1]
        x._accumulate(dx)

    return _make(out_data, (x,), bwd)


def box_mean3x3(x: Tensor) -> Tensor:
    """Valid 3x3 uniform average per channel; output is (H-2, W-2)."""
    b, c, h, w = x.shape
    if h < 3 or w < 3:
        raise ValueError(f"box_mean3x3 needs at least 3x3 input, got {h}x{w}")
    oh, ow = h - 2, w - 2
    acc = np.zeros((b, c, oh, ow), dtype=x.dtype)
    for i in range(3):
        for j in range(3):
            acc += x.data[:, :, i : i + oh, j : j + ow]
    out_data = acc / 9.0

    def bwd(g):
        if not x.requires_grad:
            return
        dx = np.zeros_like(x.data)
        gs = g / 9.0
        for i in range(3):
            for j in range(3):
                dx[:, :, i : i + oh, j : j + ow] += gs
        x._accumulate(dx)

    return _make(out_data, (x,), bwd)


# ---------------------------------------------------------------------------
# Convolutions
# ---------------------------------------------------------------------------

def _conv_out_size(n: int, k: int, stride: int, pad: int) -> int:
    return (n + 2 * pad - k) // stride + 1


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    b, c, h, w = x.shape
    oh = _conv_out_size(h, kh, stride, pad)
    ow = _conv_out_size(w, kw, stride, pad)
    if pad > 0:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = x[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride]
    return cols.reshape(b, c * kh * kw, oh * ow)


def _col2im(cols: np.ndarray, shape: tuple, kh: int, kw: int, stride: int, pad: int, oh: int, ow: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add columns back onto the image grid."""
    b, c, h, w = shape
    acc = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    cols = cols.reshape(b, c, kh, kw, oh, ow)
    for i in range(kh):
        for j in range(kw):
            acc[:, :, i : i + stride * oh : stride, j : j + stride * ow : stride] += cols[:, :, i, j]
    if pad > 0:
        acc = acc[:, :, pad : pad + h, pad : pad + w]
    return np.ascontiguousarray(acc)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation with weight (out_c, in_c, kh, kw), zero padding."""
    if stride not in (1, 2):
        raise ValueError(f"conv2d: stride must be 1 or 2, got {stride}")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects rank-4 input and weight")
    out_c, in_c, kh, kw = weight.shape
    if x.shape[1] != in_c:
        raise ValueError(f"conv2d: input shape {x.shape} incompatible with weight shape {weight.shape}")
    b, _, h, w = x.shape
    oh = _conv_out_size(h, kh, stride, padding)
    ow = _conv_out_size(w, kw, stride, padding)
    if oh < 1 or ow < 1:
        raise ValueError(f"conv2d: output would be empty for input {x.shape}, kernel {weight.shape}, stride {stride}, padding {padding}")

    cols = _im2col(x.data, kh, kw, stride, padding)
    w_mat = weight.data.reshape(out_c, in_c * kh * kw)
    out = np.matmul(w_mat, cols).reshape(b, out_c, oh, ow)
    if bias is not None:
        if bias.shape != (out_c,):
            raise ValueError(f"conv2d: bias shape {bias.shape} incompatible with weight shape {weight.shape}")
        out = out + bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)
    # keep small column matrices for the weight gradient; big ones are
    # cheaper to recompute than to hold for the whole step
    saved_cols = cols if (weight.requires_grad and cols.nbytes <= 32 * 2**20) else None

    def bwd(g):
        g_mat = g.reshape(b, out_c, oh * ow)
        if weight.requires_grad:
            cols_b = saved_cols if saved_cols is not None else _im2col(x.data, kh, kw, stride, padding)
            dw = np.matmul(g_mat, cols_b.transpose(0, 2, 1)).sum(axis=0)
            weight._accumulate(dw.reshape(weight.shape))
        if x.requires_grad:
            dcols = np.matmul(w_mat.T, g_mat)
            x._accumulate(_col2im(dcols, x.shape, kh, kw, stride, padding, oh, ow))
        if bias is not None and bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return _make(out, parents, bwd)


def conv_transpose2d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of conv2d: weight (in_c, out_c, kh, kw) maps in_c -> out_c.

    Sharing a weight array W between conv2d and conv_transpose2d gives an
    exact transpose pair: <conv_transpose2d(x, W), y> == <x, conv2d(y, W)>.
    """
    if stride not in (1, 2):
        raise ValueError(f"conv_transpose2d: stride must be 1 or 2, got {stride}")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv_transpose2d expects rank-4 input and weight")
    in_c, out_c, kh, kw = weight.shape
    if x.shape[1] != in_c:
        raise ValueError(f"conv_transpose2d: input shape {x.shape} incompatible with weight shape {weight.shape}")
    b, _, h, w = x.shape
    oh = (h - 1) * stride - 2 * padding + kh
    ow = (w - 1) * stride - 2 * padding + kw
    if oh < 1 or ow < 1:
        raise ValueError(f"conv_transpose2d: output would be empty for input {x.shape}, kernel {weight.shape}, stride {stride}, padding {padding}")

    x_mat = x.data.reshape(b, in_c, h * w)
    w_mat = weight.data.reshape(in_c, out_c * kh * kw)
    cols = np.matmul(w_mat.T, x_mat)
    out = _col2im(cols, (b, out_c, oh, ow), kh, kw, stride, padding, h, w)

    def bwd(g):
        g_cols = _im2col(g, kh, kw, stride, padding)
        if x.requires_grad:
            dx = np.matmul(w_mat, g_cols).reshape(x.shape)
            x._accumulate(dx)
        if weight.requires_grad:
            dw = np.matmul(x_mat, g_cols.transpose(0, 2, 1)).sum(axis=0)
            weight._accumulate(dw.reshape(weight.shape))

    return _make(out, (x, weight), bwd)


def add_channel_bias(x: Tensor, bias: Tensor) -> Tensor:
    if bias.shape != (x.shape[1],):
        raise ValueError(f"add_channel_bias: bias shape {bias.shape} does not match {x.shape[1]} channels")
    out_data = x.data + bias.data[None, :, None, None]

    def bwd(g):
        if x.requires_grad:
            x._accumulate(g)
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))

    return _make(out_data, (x, bias), bwd)


# ---------------------------------------------------------------------------
# Gradient checking
# ---------------------------------------------------------------------------

def grad_check(f: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` must rebuild its graph from the given tensors on every call.
    The error denominator is max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0.0:
        raise ValueError(f"grad_check: eps must be positive, got {eps}")
    for t in inputs:
        t.zero_grad()
    out = f(*inputs)
    if out.size != 1:
        raise ValueError("grad_check: f must return a scalar")
    out.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    max_err = 0.0
    for t, an in zip(inputs, analytic):
        flat = t.data.reshape(-1)
        an_flat = an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            with no_grad():
                fp = float(f(*inputs).data)
            flat[i] = orig - eps
            with no_grad():
                fm = float(f(*inputs).data)
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * eps)
            denom = max(abs(an_flat[i]), abs(numeric), 1e-8)
            err = abs(an_flat[i] - numeric) / denom
            if err > max_err:
                max_err = err
    return max_err
