"""3D hourglass aggregation and top-k soft-argmax disparity regression.

Channel plan with base parameter i and variant parameter j:
entry conv to j, then a 3-stage stride-2 encoder (i+j, i+2j, i+4j), a deconv
decoder with two skip concatenations restoring i+2j and i+j, and a final
deconv projecting to a single channel at the input volume resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .costvol import CostVolume
from .tensor import ShapeError, Tensor


@dataclass
class DisparityMap:
    data: Tensor          # [B, H, W], pixels at this map's own scale
    scale: int
    valid: np.ndarray | None = None  # bool [B, H, W]; None means all valid

    @property
    def shape(self):
        return self.data.shape

    def valid_mask(self) -> np.ndarray:
        if self.valid is None:
            return np.ones(self.data.shape, dtype=bool)
        return self.valid


class HourglassAggregator(nn.Module):
    MIN_FACTOR = 8  # three stride-2 halvings

    def __init__(self, in_channels: int, base: int, channel: int,
                 rng: np.random.Generator):
        super().__init__()
        i, j = base, channel
        self.entry = nn.conv_bn_gelu(3, in_channels, j, rng=rng)
        self.enc1 = nn.conv_bn_gelu(3, j, i + j, stride=2, rng=rng)
        self.enc1b = nn.conv_bn_gelu(3, i + j, i + j, rng=rng)
        self.enc2 = nn.conv_bn_gelu(3, i + j, i + 2 * j, stride=2, rng=rng)
        self.enc2b = nn.conv_bn_gelu(3, i + 2 * j, i + 2 * j, rng=rng)
        self.enc3 = nn.conv_bn_gelu(3, i + 2 * j, i + 4 * j, stride=2, rng=rng)
        self.enc3b = nn.conv_bn_gelu(3, i + 4 * j, i + 4 * j, rng=rng)
        self.dec2 = nn.deconv_bn_gelu(3, i + 4 * j, i + 2 * j, rng=rng)
        self.mix2 = nn.conv_bn_gelu(3, 2 * (i + 2 * j), i + 2 * j, rng=rng)
        self.dec1 = nn.deconv_bn_gelu(3, i + 2 * j, i + j, rng=rng)
        self.mix1 = nn.conv_bn_gelu(3, 2 * (i + j), i + j, rng=rng)
        self.final = nn.Deconv3d(i + j, 1, 3, stride=2, padding=1, output_padding=1,
                                 rng=rng)

    def forward(self, volume: Tensor) -> Tensor:
        if volume.ndim != 5:
            raise ShapeError(f"expected [B, C, D, H, W] volume, got {volume.shape}")
        d, h, w = volume.shape[2:]
        for name, n in (("disparity", d), ("height", h), ("width", w)):
            if n < self.MIN_FACTOR or n % self.MIN_FACTOR:
                raise ShapeError(
                    f"volume {name} axis ({n}) too small to survive 3 halvings; "
                    f"each of D, H, W must be a multiple of {self.MIN_FACTOR}"
                )
        x0 = self.entry(volume)
        e1 = self.enc1b(self.enc1(x0))
        e2 = self.enc2b(self.enc2(e1))
        e3 = self.enc3b(self.enc3(e2))
        d2 = self.mix2(T.concat([e2, self.dec2(e3)], axis=1))
        d1 = self.mix1(T.concat([e1, self.dec1(d2)], axis=1))
        return self.final(d1)  # [B, 1, D, H, W]


def hourglass_aggregate(aggregator: HourglassAggregator, volume: CostVolume) -> Tensor:
    return aggregator(volume.data)


def regress_disparity(agg: Tensor, k: int, scale: int) -> DisparityMap:
    """Top-k soft-argmax along the disparity axis.

    Per pixel: take the k largest aggregated values (ties -> lowest index),
    softmax over them, and output the weighted sum of their disparity indices.
    """
    if agg.ndim != 5 or agg.shape[1] != 1:
        raise ShapeError(f"expected [B, 1, D, H, W], got {agg.shape}")
    b, _, d, h, w = agg.shape
    if not 1 <= k <= d:
        raise ShapeError(f"top-k count {k} out of range [1, {d}]")
    scores = T.reshape(agg, (b, d, h, w))
    values, idx = T.topk(scores, k, axis=1)
    weights = T.softmax(values, axis=1)
    disp = T.tsum(T.mul(weights, Tensor(idx.astype(np.float64), dtype=values.dtype)),
                  axis=1)
    return DisparityMap(data=disp, scale=scale)
