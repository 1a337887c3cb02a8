"""Shuffle-mixer upsampling stage.

Each stage halves the scale (doubles resolution) of a disparity map:

  out = bilinear(2 * disp, x2) + refine(pixel_shuffle(mix(fuse(disp, guide_in))),
                                        guide_out)

where fuse extracts features from the disparity map and merges them with
left-image guidance at the input scale, mix is two feature-mixing blocks
(channel split, pointwise conv, channel shuffle, depthwise conv, residual),
and refine is a small feature-guided 2D hourglass producing a residual.
Disparity values are doubled alongside the spatial resolution.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from . import tensor as T
from .aggregate3d import DisparityMap
from .backbone import FeaturePyramid
from .tensor import ShapeError, Tensor


@dataclass
class EsmStageConfig:
    in_scale: int
    out_scale: int
    mix_channels: int
    guide_in_channels: int
    guide_out_channels: int
    refine_channels: tuple = (16, 24)


class FuseBlock(nn.Module):
    """Disparity features (four convs) concatenated with guidance, two more convs."""

    def __init__(self, guide_channels: int, mix_channels: int,
                 rng: np.random.Generator):
        super().__init__()
        dc = max(mix_channels // 2, 4)
        self.d1 = nn.conv_bn_gelu(2, 1, dc, rng=rng)
        self.d2 = nn.conv_bn_gelu(2, dc, dc, rng=rng)
        self.d3 = nn.conv_bn_gelu(2, dc, dc, rng=rng)
        self.d4 = nn.conv_bn_gelu(2, dc, dc, rng=rng)
        self.f1 = nn.conv_bn_gelu(2, dc + guide_channels, mix_channels, rng=rng)
        self.f2 = nn.conv_bn_gelu(2, mix_channels, mix_channels, rng=rng)

    def forward(self, disp: Tensor, guide: Tensor) -> Tensor:
        if disp.ndim != 3:
            raise ShapeError(f"expected [B, H, W] disparity, got {disp.shape}")
        if disp.shape[-2:] != guide.shape[-2:]:
            raise ShapeError(f"disparity {disp.shape[-2:]} and guidance "
                             f"{guide.shape[-2:]} are at different scales")
        x = T.reshape(disp, (disp.shape[0], 1) + disp.shape[1:])
        x = self.d4(self.d3(self.d2(self.d1(x))))
        return self.f2(self.f1(T.concat([x, guide], axis=1)))


class FMBlock(nn.Module):
    """Feature-mixing block: split halves, pointwise conv+gelu on one half,
    channel shuffle, depthwise 3x3, residual."""

    def __init__(self, channels: int, rng: np.random.Generator):
        super().__init__()
        if channels % 2:
            raise ShapeError(f"feature-mixing block needs even channels, got {channels}")
        half = channels // 2
        self.pointwise = nn.Conv2d(half, half, 1, rng=rng)
        self.depthwise = nn.Conv2d(channels, channels, 3, padding=1, groups=channels,
                                   rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        half = x.shape[1] // 2
        a, b = T.split_channels(x, half)
        a = T.gelu(self.pointwise(a))
        mixed = T.channel_shuffle(T.concat([a, b], axis=1), 2)
        return T.add(self.depthwise(mixed), x)


class RefineHourglass2d(nn.Module):
    """Feature-guided 2D hourglass emitting a 1-channel residual map."""

    def __init__(self, in_channels: int, channels: tuple,
                 rng: np.random.Generator):
        super().__init__()
        c1, c2 = channels
        self.enc1 = nn.conv_bn_gelu(2, in_channels, c1, stride=2, rng=rng)
        self.enc1b = nn.conv_bn_gelu(2, c1, c1, rng=rng)
        self.enc2 = nn.conv_bn_gelu(2, c1, c2, stride=2, rng=rng)
        self.enc2b = nn.conv_bn_gelu(2, c2, c2, rng=rng)
        self.dec1 = nn.deconv_bn_gelu(2, c2, c1, rng=rng)
        self.mix1 = nn.conv_bn_gelu(2, 2 * c1, c1, rng=rng)
        self.final = nn.Deconv2d(c1, 1, 3, stride=2, padding=1, output_padding=1,
                                 rng=rng)

    def forward(self, up_feats: Tensor, guide_out: Tensor) -> Tensor:
        if up_feats.shape[-2:] != guide_out.shape[-2:]:
            raise ShapeError(f"upsampled features {up_feats.shape[-2:]} and guidance "
                             f"{guide_out.shape[-2:]} are at different scales")
        h, w = up_feats.shape[-2:]
        if h % 4 or w % 4:
            raise ShapeError(f"refinement input dims must be divisible by 4, got {h}x{w}")
        x = T.concat([up_feats, guide_out], axis=1)
        e1 = self.enc1b(self.enc1(x))
        e2 = self.enc2b(self.enc2(e1))
        d1 = self.mix1(T.concat([e1, self.dec1(e2)], axis=1))
        return self.final(d1)  # [B, 1, H, W]

    def zero_head(self):
        """Zero the final projection so the stage reduces to pure bilinear x2."""
        self.final.weight.data = np.zeros_like(self.final.weight.data)
        self.final.bias.data = np.zeros_like(self.final.bias.data)


class EsmStage(nn.Module):
    def __init__(self, cfg: EsmStageConfig, rng: np.random.Generator):
        super().__init__()
        if cfg.out_scale * 2 != cfg.in_scale:
            raise ValueError(f"stage must halve the scale, got {cfg.in_scale} -> "
                             f"{cfg.out_scale}")
        if cfg.mix_channels % 4:
            raise ValueError("mix_channels must be divisible by 4 for pixel shuffle")
        self.cfg = cfg
        self.fuse = FuseBlock(cfg.guide_in_channels, cfg.mix_channels, rng)
        self.fm1 = FMBlock(cfg.mix_channels, rng)
        self.fm2 = FMBlock(cfg.mix_channels, rng)
        self.refine = RefineHourglass2d(cfg.mix_channels // 4 + cfg.guide_out_channels,
                                        cfg.refine_channels, rng)

    def forward(self, disp: DisparityMap, pyramid: FeaturePyramid) -> DisparityMap:
        if disp.scale != self.cfg.in_scale:
            raise ShapeError(f"stage expects scale 1/{self.cfg.in_scale}, got "
                             f"1/{disp.scale}")
        guide_in = pyramid.guidance(self.cfg.in_scale)
        guide_out = pyramid.guidance(self.cfg.out_scale)

        # values double with the spatial resolution
        base = T.resize(T.mul(disp.data, 2.0), scale=2, mode="bilinear")
        feats = self.fm2(self.fm1(self.fuse(disp.data, guide_in)))
        up = T.pixel_shuffle(feats, 2)
        residual = self.refine(up, guide_out)
        b = residual.shape[0]
        out = T.add(base, T.reshape(residual, (b,) + residual.shape[2:]))
        return DisparityMap(data=out, scale=self.cfg.out_scale)
