"""Finite-difference gradient suite over every differentiable op and the
composite blocks. Runs in float64; used by both the CLI and the tests."""

from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .aggregate3d import regress_disparity
from .esm import FMBlock, FuseBlock, RefineHourglass2d
from .tensor import GradCheckReport, Tensor, grad_check

TOL = 1e-4
EPS = 1e-4
SEEDS_PER_OP = 20


def _t(rng, shape, scale=1.0, offset=0.0):
    return Tensor(offset + scale * rng.standard_normal(shape),
                  requires_grad=True, dtype=np.float64)


def _cast64(module: nn.Module):
    for _, p in module.named_parameters():
        p.data = p.data.astype(np.float64)
    return module


def _separated(rng, shape, axis, min_gap=1e-2):
    """Random values whose per-fiber gaps along `axis` exceed min_gap, so the
    top-k selection is stable under +/- eps perturbations."""
    x = rng.standard_normal(shape) * 3.0
    order = np.sort(x, axis=axis)
    gaps = np.diff(order, axis=axis)
    while gaps.size and gaps.min() < min_gap:
        x = rng.standard_normal(shape) * 3.0
        order = np.sort(x, axis=axis)
        gaps = np.diff(order, axis=axis)
    return Tensor(x, requires_grad=True, dtype=np.float64)


def _checks_for_seed(seed: int):
    """Yield (name, fn, inputs) triples for one random seed."""
    rng = np.random.default_rng(seed)

    yield "add", lambda a, b: T.add(a, b), [_t(rng, (2, 3, 4)), _t(rng, (2, 1, 4))]
    yield "mul", lambda a, b: T.mul(a, b), [_t(rng, (2, 3, 4)), _t(rng, (2, 3, 1))]
    yield "div", lambda a, b: T.div(a, b), [
        _t(rng, (2, 3)), _t(rng, (2, 3), scale=0.5, offset=2.0)]
    yield "square", T.square, [_t(rng, (3, 4))]
    yield "sqrt", T.sqrt, [_t(rng, (3, 4), scale=0.5, offset=2.0)]
    yield "gelu", T.gelu, [_t(rng, (3, 5))]
    yield "leaky_relu", lambda a: T.leaky_relu(a, 0.1), [_t(rng, (3, 5), offset=0.05)]
    yield "sigmoid", T.sigmoid, [_t(rng, (3, 5))]
    yield "smooth_l1", T.smooth_l1, [
        Tensor(rng.uniform(-3, 3, (4, 4)).round(1) + 0.04,
               requires_grad=True, dtype=np.float64)]
    yield "clamp", lambda a: T.clamp(a, -1.0, 1.0), [
        Tensor(rng.uniform(-2, 2, (4, 4)).round(1) + 0.03,
               requires_grad=True, dtype=np.float64)]
    yield "sum", lambda a: T.tsum(a, axis=(0, 2)), [_t(rng, (2, 3, 4))]
    yield "mean", lambda a: T.tmean(a, axis=1, keepdims=True), [_t(rng, (2, 3, 4))]
    yield "reshape", lambda a: T.reshape(a, (4, 6)), [_t(rng, (2, 3, 4))]
    yield "transpose", lambda a: T.transpose(a, (2, 0, 1)), [_t(rng, (2, 3, 4))]
    yield "getitem", lambda a: a[:, 1:3, ::2], [_t(rng, (2, 4, 6))]
    yield "pad", lambda a: T.pad_spatial(a, ((0, 0), (1, 2))), [_t(rng, (3, 4))]
    yield "concat", lambda a, b: T.concat([a, b], axis=1), [
        _t(rng, (2, 2, 3)), _t(rng, (2, 4, 3))]
    yield "conv2d", lambda x, w, b: T.conv(x, w, b, stride=2, padding=1), [
        _t(rng, (1, 2, 5, 6)), _t(rng, (3, 2, 3, 3), scale=0.5), _t(rng, (3,))]
    yield "conv2d_grouped", lambda x, w: T.conv(x, w, padding=1, groups=2), [
        _t(rng, (1, 4, 4, 4)), _t(rng, (4, 2, 3, 3), scale=0.5)]
    yield "conv3d", lambda x, w, b: T.conv(x, w, b, stride=1, padding=1), [
        _t(rng, (1, 2, 3, 4, 4)), _t(rng, (2, 2, 3, 3, 3), scale=0.4), _t(rng, (2,))]
    yield "deconv2d", lambda x, w, b: T.deconv(x, w, b, stride=2, padding=1,
                                               output_padding=1), [
        _t(rng, (1, 2, 3, 4)), _t(rng, (2, 3, 3, 3), scale=0.5), _t(rng, (3,))]
    yield "deconv3d", lambda x, w: T.deconv(x, w, stride=2, padding=1,
                                            output_padding=1), [
        _t(rng, (1, 2, 2, 3, 3)), _t(rng, (2, 1, 3, 3, 3), scale=0.5)]
    yield "pixel_shuffle", lambda a: T.pixel_shuffle(a, 2), [_t(rng, (1, 8, 2, 3))]
    yield "channel_shuffle", lambda a: T.channel_shuffle(a, 2), [_t(rng, (1, 6, 2, 3))]
    yield "resize_bilinear", lambda a: T.resize(a, scale=2, mode="bilinear"), [
        _t(rng, (1, 2, 3, 4))]
    yield "resize_down", lambda a: T.resize(a, scale=0.5, mode="bilinear"), [
        _t(rng, (1, 2, 4, 6))]
    yield "resize_nearest", lambda a: T.resize(a, scale=2, mode="nearest"), [
        _t(rng, (1, 2, 3, 4))]
    yield "softmax", lambda a: T.softmax(a, axis=1), [_t(rng, (3, 5))]
    yield "topk", lambda a: T.topk(a, 2, axis=1)[0], [_separated(rng, (3, 5), axis=1)]

    bn = _cast64(nn.BatchNorm(3, dtype=np.float64))
    bn.scale.data = 1.0 + 0.1 * rng.standard_normal(3)
    bn.shift.data = 0.1 * rng.standard_normal(3)
    yield "batchnorm", bn, [_t(rng, (2, 3, 4, 4))]

    chain = _cast64(nn.Sequential(
        nn.Conv2d(2, 3, 3, padding=1, rng=rng, dtype=np.float64),
        nn.BatchNorm(3, dtype=np.float64),
        nn.Gelu(),
    ))
    yield "conv_bn_gelu_chain", chain, [_t(rng, (2, 2, 4, 4))]

    fm = _cast64(FMBlock(8, rng))
    yield "fm_block", lambda x: fm(fm(x)), [_t(rng, (1, 8, 4, 4))]

    fuse = _cast64(FuseBlock(guide_channels=3, mix_channels=8, rng=rng))
    yield "fuse", lambda d, g: fuse(d, g), [_t(rng, (1, 4, 4)), _t(rng, (1, 3, 4, 4))]

    # 8x8 keeps the stride-4 bottleneck at 2x2 so batch variances are
    # well-conditioned for central differences
    hg2 = _cast64(RefineHourglass2d(4, (4, 6), rng))
    yield "hourglass2d", lambda u, g: hg2(u, g), [
        _t(rng, (2, 2, 8, 8)), _t(rng, (2, 2, 8, 8))]

    # 2-level reduced 3D hourglass (same building blocks, one level fewer)
    hg3 = _cast64(nn.Sequential())
    enc1 = _cast64(nn.conv_bn_gelu(3, 1, 2, stride=2, rng=rng))
    enc2 = _cast64(nn.conv_bn_gelu(3, 2, 3, stride=2, rng=rng))
    dec1 = _cast64(nn.deconv_bn_gelu(3, 3, 2, rng=rng))
    dec0 = _cast64(nn.Deconv3d(2 + 2, 1, 3, stride=2, padding=1, output_padding=1,
                               rng=rng, dtype=np.float64))

    def reduced_hourglass3d(v):
        e1 = enc1(v)
        e2 = enc2(e1)
        d1 = T.concat([e1, dec1(e2)], axis=1)
        return dec0(d1)

    yield "hourglass3d_reduced", reduced_hourglass3d, [_t(rng, (2, 1, 4, 4, 4))]

    def regress_k2(v):
        return regress_disparity(v, k=2, scale=4).data

    yield "regress_topk2", regress_k2, [
        Tensor(_separated(rng, (1, 1, 6, 2, 3), axis=2).data,
               requires_grad=True, dtype=np.float64)]


def op_names() -> list[str]:
    return [name for name, _, _ in _checks_for_seed(0)]


def run_suite(seeds: int = SEEDS_PER_OP, tol: float = TOL, eps: float = EPS,
              log=None) -> dict[str, GradCheckReport]:
    """Run every check over `seeds` random seeds; returns the worst report per op."""
    worst: dict[str, GradCheckReport] = {}
    for seed in range(seeds):
        for name, fn, inputs in _checks_for_seed(seed):
            report = grad_check(fn, inputs, eps=eps, tol=tol, seed=seed)
            prev = worst.get(name)
            if prev is None or report.max_rel_err > prev.max_rel_err:
                worst[name] = report
    if log:
        for name, report in worst.items():
            status = "pass" if report.passed else "FAIL"
            log(f"{status}  {name:24s} max_rel_err={report.max_rel_err:.3e}")
    return worst
