"""Minimal dense-tensor engine with reverse-mode automatic differentiation.

Covers exactly the operator set the stereo pipeline needs: convolutions
(2D/3D, grouped), transpose convolutions, shuffles, interpolation, softmax /
top-k, batch normalization building blocks, and a handful of elementwise ops.

Conventions:
  * default compute precision is float32; gradient checking runs in float64
  * convolution uses cross-correlation semantics (no kernel flip)
  * broadcasting is restricted to singleton axes of equal-rank operands
  * tensors are immutable once created; only ``grad`` is written, and only by
    the backward pass
"""

from __future__ import annotations

import struct
from typing import Callable, Sequence

import numpy as np

from . import kernels

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


class NumericsError(ArithmeticError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "op", "_children", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None, *, op: str = "leaf",
                 _children: tuple = ()):
        if isinstance(data, Tensor):
            raise TypeError("wrap ndarrays or nested lists, not Tensors")
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = op
        self._children = _children
        self._backward = None

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, op={self.op})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False, op="detach")

    def zero_grad(self):
        self.grad = None

    def is_leaf(self) -> bool:
        return self._backward is None

    # -- operator sugar ------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return mul(self, 1.0 / other)

    def __getitem__(self, idx):
        return getitem(self, idx)

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

    # -- backward pass -------------------------------------------------------

    def backward(self):
        """Populate ``grad`` on every reachable requires_grad leaf.

        The root must be a scalar; seeding non-scalar roots is rejected so the
        caller is forced to state the reduction explicitly.
        """
        if self.size != 1:
            raise ShapeError(
                f"backward requires a scalar root, got shape {self.shape}; "
                "reduce the output first"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._children:
                stack.append((child, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if np.isnan(g).any():
                raise NumericsError(f"NaN gradient encountered at op '{node.op}'")
            if node._backward is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for child, cg in node._backward(g):
                if not (child.requires_grad or child._backward is not None):
                    continue
                prev = grads.get(id(child))
                grads[id(child)] = cg if prev is None else prev + cg


def _wrap(data: np.ndarray, children: Sequence[Tensor], op: str,
          backward: Callable[[np.ndarray], list] | None) -> Tensor:
    rg = any(c.requires_grad for c in children)
    out = Tensor(data, requires_grad=rg, dtype=data.dtype, op=op,
                 _children=tuple(children) if rg else ())
    if rg:
        out._backward = backward
    return out


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- elementwise ------------------------------------------------------------


def _check_broadcast(a_shape, b_shape, op):
    if len(a_shape) != len(b_shape):
        raise ShapeError(f"{op}: rank mismatch {a_shape} vs {b_shape} "
                         "(broadcasting needs equal rank)")
    for i, (a, b) in enumerate(zip(a_shape, b_shape)):
        if a != b and a != 1 and b != 1:
            raise ShapeError(f"{op}: axis {i} incompatible ({a} vs {b}); "
                             "only singleton axes broadcast")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        data = a.data + b
        return _wrap(data, [a], "add_const", lambda g: [(a, g)])
    if not isinstance(a, Tensor):
        return add(b, a)
    _check_broadcast(a.shape, b.shape, "add")
    data = a.data + b.data

    def backward(g):
        return [(a, _unbroadcast(g, a.shape)), (b, _unbroadcast(g, b.shape))]

    return _wrap(data, [a, b], "add", backward)


def mul(a, b):
    if not isinstance(b, Tensor):
        a = as_tensor(a)
        data = a.data * b
        return _wrap(data, [a], "mul_const", lambda g: [(a, g * b)])
    if not isinstance(a, Tensor):
        return mul(b, a)
    _check_broadcast(a.shape, b.shape, "mul")
    data = a.data * b.data

    def backward(g):
        return [(a, _unbroadcast(g * b.data, a.shape)),
                (b, _unbroadcast(g * a.data, b.shape))]

    return _wrap(data, [a, b], "mul", backward)


def div(a: Tensor, b: Tensor):
    _check_broadcast(a.shape, b.shape, "div")
    data = a.data / b.data

    def backward(g):
        return [(a, _unbroadcast(g / b.data, a.shape)),
                (b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))]

    return _wrap(data, [a, b], "div", backward)


def square(a: Tensor):
    data = a.data * a.data
    return _wrap(data, [a], "square", lambda g: [(a, 2.0 * a.data * g)])


def sqrt(a: Tensor):
    data = np.sqrt(a.data)

    def backward(g):
        return [(a, g / (2.0 * np.maximum(data, np.finfo(data.dtype).tiny)))]

    return _wrap(data, [a], "sqrt", backward)


def clamp(a: Tensor, lo: float, hi: float):
    data = np.clip(a.data, lo, hi)

    def backward(g):
        mask = ((a.data >= lo) & (a.data <= hi)).astype(g.dtype)
        return [(a, g * mask)]

    return _wrap(data, [a], "clamp", backward)


# GELU tanh approximation; the constant is sqrt(2/pi).
_GELU_C = 0.7978845608028654
_GELU_A = 0.044715


def gelu(a: Tensor):
    x = a.data
    inner = _GELU_C * (x + _GELU_A * x ** 3)
    t = np.tanh(inner)
    data = 0.5 * x * (1.0 + t)

    def backward(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        dx = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner
        return [(a, g * dx.astype(g.dtype, copy=False))]

    return _wrap(data.astype(x.dtype, copy=False), [a], "gelu", backward)


def leaky_relu(a: Tensor, slope: float = 0.1):
    x = a.data
    data = np.where(x >= 0, x, slope * x)

    def backward(g):
        return [(a, g * np.where(x >= 0, 1.0, slope).astype(g.dtype, copy=False))]

    return _wrap(data.astype(x.dtype, copy=False), [a], "leaky_relu", backward)


def sigmoid(a: Tensor):
    s = 1.0 / (1.0 + np.exp(-a.data))
    data = s.astype(a.dtype, copy=False)
    return _wrap(data, [a], "sigmoid", lambda g: [(a, g * data * (1.0 - data))])


def smooth_l1(a: Tensor):
    """x^2/2 for |x| < 1, |x| - 0.5 otherwise; C1 at the joint."""
    x = a.data
    ax = np.abs(x)
    data = np.where(ax < 1.0, 0.5 * x * x, ax - 0.5).astype(x.dtype, copy=False)

    def backward(g):
        return [(a, g * np.where(ax < 1.0, x, np.sign(x)).astype(g.dtype, copy=False))]

    return _wrap(data, [a], "smooth_l1", backward)


# -- reductions and reshaping ------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims=False):
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return [(a, np.broadcast_to(g, a.shape).copy())]
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        if not keepdims:
            g = np.expand_dims(g, tuple(ax % a.ndim for ax in axes))
        return [(a, np.broadcast_to(g, a.shape).copy())]

    return _wrap(np.asarray(data), [a], "sum", backward)


def tmean(a: Tensor, axis=None, keepdims=False):
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Tensor, shape):
    data = a.data.reshape(shape)
    return _wrap(data, [a], "reshape", lambda g: [(a, g.reshape(a.shape))])


def transpose(a: Tensor, axes):
    axes = tuple(axes)
    data = a.data.transpose(axes)
    inv = tuple(np.argsort(axes))
    return _wrap(data, [a], "transpose", lambda g: [(a, g.transpose(inv))])


def getitem(a: Tensor, idx):
    data = a.data[idx]

    def backward(g):
        gx = np.zeros_like(a.data)
        np.add.at(gx, idx, g)
        return [(a, gx)]

    return _wrap(np.ascontiguousarray(data), [a], "getitem", backward)


def pad_spatial(a: Tensor, pad_width):
    """Zero-pad; pad_width follows np.pad conventions (per-axis pairs)."""
    data = np.pad(a.data, pad_width)
    sl = tuple(slice(p0, p0 + s) for (p0, _), s in zip(pad_width, a.shape))
    return _wrap(data, [a], "pad", lambda g: [(a, g[sl])])


def concat(tensors: Sequence[Tensor], axis: int):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim:
            raise ShapeError("concat: rank mismatch")
        for i, (x, y) in enumerate(zip(ref, t.shape)):
            if i != axis % t.ndim and x != y:
                raise ShapeError(f"concat: axis {i} length mismatch ({x} vs {y})")
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        out = []
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            out.append((t, np.ascontiguousarray(g[tuple(sl)])))
        return out

    return _wrap(data, tensors, "concat", backward)


def split_channels(a: Tensor, at: int, axis: int = 1):
    """Split into two tensors at channel index ``at`` along ``axis``."""
    if not 0 < at < a.shape[axis]:
        raise ShapeError(f"split index {at} outside (0, {a.shape[axis]})")
    head = [slice(None)] * a.ndim
    tail = [slice(None)] * a.ndim
    head[axis] = slice(0, at)
    tail[axis] = slice(at, None)
    return getitem(a, tuple(head)), getitem(a, tuple(tail))


def stack(tensors: Sequence[Tensor], axis: int):
    expanded = [reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors]
    return concat(expanded, axis=axis)


# -- shuffles ----------------------------------------------------------------


def pixel_shuffle(a: Tensor, r: int):
    """[B, C*r^2, H, W] -> [B, C, H*r, W*r]; pure element permutation."""
    if a.ndim != 4:
        raise ShapeError(f"pixel_shuffle expects a 4D tensor, got rank {a.ndim}")
    B, C, H, W = a.shape
    if C % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle: channels {C} not divisible by r^2={r * r}")
    c = C // (r * r)
    x = reshape(a, (B, c, r, r, H, W))
    x = transpose(x, (0, 1, 4, 2, 5, 3))  # B, c, H, r, W, r
    return reshape(x, (B, c, H * r, W * r))


def pixel_unshuffle(a: Tensor, r: int):
    B, C, H, W = a.shape
    if H % r or W % r:
        raise ShapeError(f"pixel_unshuffle: spatial dims {H}x{W} not divisible by {r}")
    x = reshape(a, (B, C, H // r, r, W // r, r))
    x = transpose(x, (0, 1, 3, 5, 2, 4))
    return reshape(x, (B, C * r * r, H // r, W // r))


def channel_shuffle(a: Tensor, groups: int):
    """Fixed channel permutation: reshape C -> (g, C/g), transpose, flatten."""
    B, C = a.shape[0], a.shape[1]
    if C % groups != 0:
        raise ShapeError(f"channel_shuffle: channels {C} not divisible by groups {groups}")
    rest = a.shape[2:]
    x = reshape(a, (B, groups, C // groups) + rest)
    order = (0, 2, 1) + tuple(range(3, 3 + len(rest)))
    x = transpose(x, order)
    return reshape(x, (B, C) + rest)


# -- convolution -------------------------------------------------------------


def _conv_validate(x: Tensor, w: Tensor, groups: int, op: str):
    nd = w.ndim - 2
    if nd not in (2, 3):
        raise ShapeError(f"{op}: weight rank {w.ndim} implies {nd} spatial dims; "
                         "only 2 or 3 supported")
    if x.ndim != w.ndim:
        raise ShapeError(f"{op}: input rank {x.ndim} does not match weight rank {w.ndim}")
    return nd


def conv(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding=0,
         groups: int = 1):
    """Grouped cross-correlation over the trailing 2 or 3 spatial axes."""
    nd = _conv_validate(x, w, groups, "conv")
    if x.shape[1] % groups != 0:
        raise ShapeError(f"conv: input channel axis ({x.shape[1]}) not divisible by "
                         f"groups ({groups})")
    if x.shape[1] != w.shape[1] * groups:
        raise ShapeError(f"conv: input channel axis is {x.shape[1]} but weight expects "
                         f"{w.shape[1] * groups} (w.shape[1]={w.shape[1]}, groups={groups})")
    if w.shape[0] % groups != 0:
        raise ShapeError(f"conv: output channel axis ({w.shape[0]}) not divisible by "
                         f"groups ({groups})")
    stride_t = kernels.tuplify(stride, nd)
    pad_t = kernels.tuplify(padding, nd)
    data = kernels.conv_forward(x.data, w.data, stride_t, pad_t, groups)
    if b is not None:
        if b.shape != (w.shape[0],):
            raise ShapeError(f"conv: bias shape {b.shape} != ({w.shape[0]},)")
        data = data + b.data.reshape((1, -1) + (1,) * nd)

    children = [x, w] + ([b] if b is not None else [])

    def backward(g):
        out = [
            (x, kernels.conv_backward_input(g, w.data, x.shape[2:], stride_t, pad_t, groups)),
            (w, kernels.conv_backward_weight(x.data, g, w.shape[2:], stride_t, pad_t, groups)),
        ]
        if b is not None:
            out.append((b, g.sum(axis=(0,) + tuple(range(2, g.ndim)))))
        return out

    return _wrap(data, children, "conv", backward)


def deconv(x: Tensor, w: Tensor, b: Tensor | None = None, stride=1, padding=0,
           output_padding=0):
    """Transpose convolution: the adjoint of ``conv`` with the same parameters.

    Weight layout is [C_in, C_out, *K] so that for shared w,
    <conv(x, w), y> == <x, deconv(y, w)> holds exactly (output_padding 0).
    """
    nd = _conv_validate(x, w, 1, "deconv")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"deconv: input channel axis is {x.shape[1]} but weight "
                         f"expects {w.shape[0]}")
    stride_t = kernels.tuplify(stride, nd)
    pad_t = kernels.tuplify(padding, nd)
    op_t = kernels.tuplify(output_padding, nd)
    out_sp = kernels.deconv_output_shape(x.shape[2:], w.shape[2:], stride_t, pad_t, op_t)
    data = kernels.conv_backward_input(x.data, w.data, out_sp, stride_t, pad_t, 1)
    if b is not None:
        if b.shape != (w.shape[1],):
            raise ShapeError(f"deconv: bias shape {b.shape} != ({w.shape[1]},)")
        data = data + b.data.reshape((1, -1) + (1,) * nd)

    children = [x, w] + ([b] if b is not None else [])

    def backward(g):
        out = [
            (x, kernels.conv_forward(g, w.data, stride_t, pad_t, 1)),
            (w, kernels.conv_backward_weight(g, x.data, w.shape[2:], stride_t, pad_t, 1)),
        ]
        if b is not None:
            out.append((b, g.sum(axis=(0,) + tuple(range(2, g.ndim)))))
        return out

    return _wrap(data, children, "deconv", backward)


# -- interpolation -----------------------------------------------------------


def _resize_sizes(in_hw, scale, size):
    if size is not None:
        out_h, out_w = size
    else:
        out_h = int(round(in_hw[0] * scale))
        out_w = int(round(in_hw[1] * scale))
    if out_h <= 0 or out_w <= 0:
        raise ShapeError(f"resize: non-positive target size ({out_h}, {out_w})")
    return out_h, out_w


def resize(a: Tensor, scale: float | None = None, size=None, mode: str = "bilinear"):
    """Resize over the trailing two axes. Bilinear uses align_corners=False."""
    if scale is None and size is None:
        raise ShapeError("resize: one of scale/size is required")
    in_h, in_w = a.shape[-2], a.shape[-1]
    out_h, out_w = _resize_sizes((in_h, in_w), scale, size)

    if mode == "nearest":
        iy = np.minimum((np.arange(out_h) * in_h // out_h), in_h - 1)
        ix = np.minimum((np.arange(out_w) * in_w // out_w), in_w - 1)
        data = a.data[..., iy[:, None], ix[None, :]]

        def backward(g):
            gx = np.zeros_like(a.data)
            np.add.at(gx, (..., iy[:, None], ix[None, :]), g)
            return [(a, gx)]

        return _wrap(np.ascontiguousarray(data), [a], "resize_nearest", backward)

    if mode != "bilinear":
        raise ValueError(f"resize: unknown mode {mode!r}")

    def axis_weights(n_in, n_out):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        i0 = np.clip(np.floor(src), 0, n_in - 1).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        w1 = np.clip(src - i0, 0.0, 1.0)
        return i0, i1, (1.0 - w1), w1

    y0, y1, wy0, wy1 = axis_weights(in_h, out_h)
    x0, x1, wx0, wx1 = axis_weights(in_w, out_w)
    wy0c = wy0[:, None].astype(a.dtype)
    wy1c = wy1[:, None].astype(a.dtype)
    wx0c = wx0.astype(a.dtype)
    wx1c = wx1.astype(a.dtype)

    rows0 = a.data[..., y0, :]
    rows1 = a.data[..., y1, :]
    rows = rows0 * wy0c + rows1 * wy1c
    data = rows[..., x0] * wx0c + rows[..., x1] * wx1c

    def backward(g):
        grows = np.zeros(g.shape[:-1] + (in_w,), dtype=g.dtype)
        np.add.at(grows, (..., x0), g * wx0c)
        np.add.at(grows, (..., x1), g * wx1c)
        gx = np.zeros_like(a.data)
        np.add.at(gx, (..., y0, slice(None)), grows * wy0c)
        np.add.at(gx, (..., y1, slice(None)), grows * wy1c)
        return [(a, gx)]

    return _wrap(np.ascontiguousarray(data), [a], "resize_bilinear", backward)


# -- softmax / top-k ---------------------------------------------------------


def softmax(a: Tensor, axis: int):
    x = a.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e / e.sum(axis=axis, keepdims=True)
    data = s.astype(x.dtype, copy=False)

    def backward(g):
        dot = (g * data).sum(axis=axis, keepdims=True)
        return [(a, (g - dot) * data)]

    return _wrap(data, [a], "softmax", backward)


def topk(a: Tensor, k: int, axis: int):
    """Top-k values (sorted descending, ties -> lowest index) and indices.

    Values are differentiable; indices are a plain int ndarray.
    """
    n = a.shape[axis]
    if not 1 <= k <= n:
        raise ShapeError(f"topk: k={k} out of range [1, {n}]")
    order = np.argsort(-a.data, axis=axis, kind="stable")
    idx = np.take(order, np.arange(k), axis=axis)
    values = np.take_along_axis(a.data, idx, axis=axis)

    def backward(g):
        gx = np.zeros_like(a.data)
        np.put_along_axis(gx, idx, g, axis=axis)
        return [(a, gx)]

    return _wrap(np.ascontiguousarray(values), [a], "topk", backward), idx


# -- batch normalization (functional core) -----------------------------------


def batch_stats(a: Tensor, channel_axis: int = 1):
    """Per-channel mean/variance over all other axes, as differentiable tensors."""
    axes = tuple(i for i in range(a.ndim) if i != channel_axis)
    n = int(np.prod([a.shape[i] for i in axes]))
    if n < 2:
        raise ShapeError("batch statistics need >= 2 elements per channel")
    mean = tmean(a, axis=axes, keepdims=True)
    var = tmean(square(add(a, mul(mean, -1.0))), axis=axes, keepdims=True)
    return mean, var, n


def normalize_batch(a: Tensor, mean: Tensor, var: Tensor, scale: Tensor,
                    shift: Tensor, eps: float = 1e-5):
    """(a - mean) / sqrt(var + eps) * scale + shift; all args broadcastable."""
    inv = div(add(a, mul(mean, -1.0)), sqrt(add(var, eps)))
    return add(mul(inv, scale), shift)


# -- diagnostics -------------------------------------------------------------


def check_finite(t: Tensor):
    if not np.isfinite(t.data).all():
        raise NumericsError(f"non-finite values in tensor produced by op '{t.op}'")
    return t


class GradCheckReport:
    def __init__(self, max_rel_err: float, tol: float, per_input: list[float]):
        self.max_rel_err = max_rel_err
        self.tol = tol
        self.per_input = per_input

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tol

    def __repr__(self):
        status = "pass" if self.passed else "FAIL"
        return f"GradCheckReport({status}, max_rel_err={self.max_rel_err:.3e}, tol={self.tol})"


def grad_check(fn, inputs: Sequence[Tensor], eps: float = 1e-4, tol: float = 1e-4,
               seed: int = 0) -> GradCheckReport:
    """Compare reverse-mode grads of fn(*inputs) against central differences.

    Inputs must be float64 leaves; the output is projected to a scalar with
    fixed random weights so every output element contributes.
    """
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("grad_check requires float64 inputs")
        if not t.requires_grad:
            raise ValueError("grad_check inputs must have requires_grad=True")

    rng = np.random.default_rng(seed)
    out = fn(*inputs)
    proj = rng.standard_normal(out.shape)

    def scalar_of(raw_inputs):
        ts = [Tensor(v, dtype=np.float64) for v in raw_inputs]
        return float((fn(*ts).data * proj).sum())

    for t in inputs:
        t.zero_grad()
    loss = tsum(mul(out, Tensor(proj, dtype=np.float64)))
    loss.backward()

    per_input = []
    worst = 0.0
    raws = [t.data.copy() for t in inputs]
    for which, t in enumerate(inputs):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = np.zeros_like(t.data)
        flat = raws[which].reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = scalar_of(raws)
            flat[i] = orig - eps
            fm = scalar_of(raws)
            flat[i] = orig
            nflat[i] = (fp - fm) / (2 * eps)
        denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
        err = float((np.abs(analytic - numeric) / denom).max()) if flat.size else 0.0
        per_input.append(err)
        worst = max(worst, err)
    return GradCheckReport(worst, tol, per_input)


# -- serialization -----------------------------------------------------------

_MAGIC = b"ESMT"
_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def save_tensor(path, array: np.ndarray):
    """Flat little-endian binary with a small header; used for checkpoints."""
    arr = np.asarray(array)
    if arr.dtype not in _DTYPE_CODES:
        raise ValueError(f"unsupported dtype {arr.dtype}")
    header = struct.pack("<4sHHH", _MAGIC, _VERSION, _DTYPE_CODES[arr.dtype], arr.ndim)
    shape = struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    payload = arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes(order="C")
    with open(path, "wb") as f:
        f.write(header + shape + payload)


def load_tensor(path) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 10 or blob[:4] != _MAGIC:
        raise ValueError(f"{path}: not a tensor file (bad magic)")
    _, version, code, rank = struct.unpack("<4sHHH", blob[:10])
    if version != _VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    if code not in _CODE_DTYPES:
        raise ValueError(f"{path}: unknown dtype code {code}")
    shape = struct.unpack(f"<{rank}I", blob[10:10 + 4 * rank]) if rank else ()
    dtype = _CODE_DTYPES[code]
    data = blob[10 + 4 * rank:]
    expect = int(np.prod(shape)) * dtype.itemsize if rank else dtype.itemsize
    if len(data) != expect:
        raise ValueError(f"{path}: truncated payload ({len(data)} vs {expect} bytes)")
    arr = np.frombuffer(data, dtype=dtype.newbyteorder("<")).astype(dtype)
    return arr.reshape(shape)
