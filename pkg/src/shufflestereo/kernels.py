"""Raw numpy convolution kernels.

These operate on plain ndarrays and are wired into the autodiff layer by
``tensor.py``. Each kernel is pure (inputs are never modified) and works for
both 2D ([B, C, H, W]) and 3D ([B, C, D, H, W]) inputs; the spatial rank is
taken from the weight tensor.

The inner loop runs over kernel offsets only (k^nd iterations); the per-offset
contraction is a batched matmul, so the heavy lifting stays inside BLAS.
"""

from __future__ import annotations

from itertools import product

import numpy as np


def tuplify(v, n: int):
    if isinstance(v, int):
        return (v,) * n
    v = tuple(v)
    if len(v) != n:
        raise ValueError(f"expected {n} values, got {v}")
    return v


def conv_output_shape(spatial, kernel, stride, pad):
    out = []
    for i, (s, k, st, p) in enumerate(zip(spatial, kernel, stride, pad)):
        o = (s + 2 * p - k) // st + 1
        if o <= 0:
            raise ValueError(
                f"conv spatial axis {i}: input {s} with kernel {k}, stride {st}, "
                f"pad {p} yields non-positive output size {o}"
            )
        out.append(o)
    return tuple(out)


def deconv_output_shape(spatial, kernel, stride, pad, output_padding):
    out = []
    for i, (s, k, st, p, op) in enumerate(zip(spatial, kernel, stride, pad, output_padding)):
        o = (s - 1) * st - 2 * p + k + op
        if o <= 0:
            raise ValueError(f"deconv spatial axis {i}: output size {o} is non-positive")
        out.append(o)
    return tuple(out)


def _pad_input(x, pad):
    if all(p == 0 for p in pad):
        return x
    width = [(0, 0), (0, 0)] + [(p, p) for p in pad]
    return np.pad(x, width)


def _offset_slices(offset, stride, out_spatial):
    return tuple(slice(o, o + st * n, st) for o, st, n in zip(offset, stride, out_spatial))


def conv_forward(x, w, stride, pad, groups=1):
    """Cross-correlation. x: [B, Cin, *S], w: [Cout, Cin/g, *K] -> [B, Cout, *O]."""
    nd = w.ndim - 2
    B, cin = x.shape[0], x.shape[1]
    cout = w.shape[0]
    kernel = w.shape[2:]
    stride, pad = tuplify(stride, nd), tuplify(pad, nd)
    out_sp = conv_output_shape(x.shape[2:], kernel, stride, pad)

    xp = _pad_input(x, pad)
    g = groups
    xg = xp.reshape(B, g, cin // g, *xp.shape[2:])
    wg = w.reshape(g, cout // g, w.shape[1], *kernel)
    n = int(np.prod(out_sp))
    out = np.zeros((B, g, cout // g, n), dtype=x.dtype)
    for off in product(*(range(k) for k in kernel)):
        sl = (slice(None),) * 3 + _offset_slices(off, stride, out_sp)
        xs = np.ascontiguousarray(xg[sl]).reshape(B, g, cin // g, n)
        wk = wg[(slice(None), slice(None), slice(None)) + off]  # [g, o, c]
        out += np.matmul(wk, xs)
    return out.reshape(B, cout, *out_sp)


def conv_backward_input(go, w, x_spatial, stride, pad, groups=1):
    """Adjoint of conv_forward w.r.t. its input. go: [B, Cout, *O] -> [B, Cin, *S]."""
    nd = w.ndim - 2
    B, cout = go.shape[0], go.shape[1]
    cin = w.shape[1] * groups
    kernel = w.shape[2:]
    stride, pad = tuplify(stride, nd), tuplify(pad, nd)
    out_sp = go.shape[2:]

    g = groups
    wg = w.reshape(g, cout // g, w.shape[1], *kernel)
    n = int(np.prod(out_sp))
    go2 = go.reshape(B, g, cout // g, n)
    padded_sp = tuple(s + 2 * p for s, p in zip(x_spatial, pad))
    gxp = np.zeros((B, g, cin // g, *padded_sp), dtype=go.dtype)
    for off in product(*(range(k) for k in kernel)):
        wk = wg[(slice(None), slice(None), slice(None)) + off]  # [g, o, c]
        contrib = np.matmul(wk.transpose(0, 2, 1), go2)  # [B, g, c, n]
        sl = (slice(None),) * 3 + _offset_slices(off, stride, out_sp)
        gxp[sl] += contrib.reshape(B, g, cin // g, *out_sp)
    unpad = (slice(None), slice(None)) + tuple(
        slice(p, p + s) for p, s in zip(pad, x_spatial)
    )
    return gxp.reshape(B, cin, *padded_sp)[unpad]


def conv_backward_weight(x, go, kernel, stride, pad, groups=1):
    """Adjoint of conv_forward w.r.t. its weight. Returns [Cout, Cin/g, *K]."""
    nd = len(kernel)
    B, cin = x.shape[0], x.shape[1]
    cout = go.shape[1]
    stride, pad = tuplify(stride, nd), tuplify(pad, nd)
    out_sp = go.shape[2:]

    xp = _pad_input(x, pad)
    g = groups
    xg = xp.reshape(B, g, cin // g, *xp.shape[2:])
    n = int(np.prod(out_sp))
    go2 = go.reshape(B, g, cout // g, n)
    gw = np.zeros((g, cout // g, cin // g, *kernel), dtype=go.dtype)
    for off in product(*(range(k) for k in kernel)):
        sl = (slice(None),) * 3 + _offset_slices(off, stride, out_sp)
        xs = np.ascontiguousarray(xg[sl]).reshape(B, g, cin // g, n)
        # [B,g,o,n] x [B,g,n,c] -> [g,o,c]
        gw[(slice(None), slice(None), slice(None)) + off] = np.matmul(
            go2, xs.transpose(0, 1, 3, 2)
        ).sum(axis=0)
    return gw.reshape(cout, cin // g, *kernel)
