"""Cost-volume construction from a scale-matched feature pair.

Two kinds:
  gwc   group-wise correlation: scaled dot product per channel group,
        C(d, x, y, g) = (N_g / N_c) * <f_l^g(x, y), f_r^g(x - d, y)>
  nc    normalized (cosine) correlation over the full channel vector

Positions with x < d have no right-image counterpart and are filled with 0;
they receive zero gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import tensor as T
from .tensor import ShapeError, Tensor

NORM_EPS = 1e-5


@dataclass
class CostVolume:
    data: Tensor  # [B, C_v, D, H, W]
    scale: int
    kind: str  # gwc | nc


def _shift_pair(f_l: Tensor, f_r: Tensor, d: int):
    if d == 0:
        return f_l, f_r
    return f_l[:, :, :, d:], f_r[:, :, :, :-d]


def build_gwc_volume(f_l: Tensor, f_r: Tensor, disparities: int, n_groups: int,
                     scale: int = 1) -> CostVolume:
    if f_l.shape != f_r.shape:
        raise ShapeError(f"feature shape mismatch: {f_l.shape} vs {f_r.shape}")
    b, c, h, w = f_l.shape
    if c % n_groups != 0:
        raise ShapeError(f"channels ({c}) not divisible by groups ({n_groups})")
    if disparities < 1:
        raise ShapeError(f"need at least one disparity, got {disparities}")
    per_group = c // n_groups

    planes = []
    for d in range(disparities):
        fl, fr = _shift_pair(f_l, f_r, d)
        prod = T.mul(fl, fr)
        prod = T.reshape(prod, (b, n_groups, per_group, h, w - d))
        corr = T.tmean(prod, axis=2)  # [B, g, H, W-d]
        if d > 0:
            corr = T.pad_spatial(corr, ((0, 0), (0, 0), (0, 0), (d, 0)))
        planes.append(corr)
    data = T.stack(planes, axis=2)  # [B, g, D, H, W]
    return CostVolume(data=data, scale=scale, kind="gwc")


def build_norm_corr_volume(f_l: Tensor, f_r: Tensor, disparities: int,
                           scale: int = 1, eps: float = NORM_EPS) -> CostVolume:
    if f_l.shape != f_r.shape:
        raise ShapeError(f"feature shape mismatch: {f_l.shape} vs {f_r.shape}")
    b, c, h, w = f_l.shape
    if disparities < 1:
        raise ShapeError(f"need at least one disparity, got {disparities}")

    norm_l = T.sqrt(T.tsum(T.square(f_l), axis=1, keepdims=True))  # [B,1,H,W]
    norm_r = T.sqrt(T.tsum(T.square(f_r), axis=1, keepdims=True))

    planes = []
    for d in range(disparities):
        fl, fr = _shift_pair(f_l, f_r, d)
        num = T.tsum(T.mul(fl, fr), axis=1, keepdims=True)  # [B,1,H,W-d]
        nl = norm_l[:, :, :, d:] if d else norm_l
        nr = norm_r[:, :, :, :-d] if d else norm_r
        cos = T.div(num, T.add(T.mul(nl, nr), eps))
        if d > 0:
            cos = T.pad_spatial(cos, ((0, 0), (0, 0), (0, 0), (d, 0)))
        planes.append(cos)
    data = T.stack(planes, axis=2)  # [B, 1, D, H, W]
    return CostVolume(data=data, scale=scale, kind="nc")


def build_cost_volume(kind: str, f_l: Tensor, f_r: Tensor, disparities: int,
                      n_groups: int, scale: int) -> CostVolume:
    if kind == "gwc":
        return build_gwc_volume(f_l, f_r, disparities, n_groups, scale=scale)
    if kind == "nc":
        return build_norm_corr_volume(f_l, f_r, disparities, scale=scale)
    raise ValueError(f"unknown cost-volume kind {kind!r}")
