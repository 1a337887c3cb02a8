"""Encoder-decoder feature extractor.

One shared-weight tower serves both views; the decoder emits features at
1/4, 1/8 and 1/16 resolution for cost-volume construction, and a shallow
two-layer stem on the left image provides guidance maps at 1/1 and 1/2 for
the upsampling stages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from . import tensor as T
from .config import ModelConfig
from .tensor import Tensor


@dataclass
class FeaturePyramid:
    """Per-image multi-resolution features; guides present on the left view only."""

    feats: dict = field(default_factory=dict)   # scale -> Tensor[B, C_s, H/s, W/s]
    guides: dict = field(default_factory=dict)  # scale -> Tensor (scales 1 and 2)

    def guidance(self, scale: int) -> Tensor:
        if scale in self.feats:
            return self.feats[scale]
        if scale in self.guides:
            return self.guides[scale]
        raise KeyError(f"no guidance available at scale 1/{scale}")


class Backbone(nn.Module):
    def __init__(self, config: ModelConfig, rng: np.random.Generator):
        super().__init__()
        e1, e2, e3, e4 = config.enc_channels
        c4, c8, c16 = (config.feat_channels[s] for s in (4, 8, 16))
        g1, g2 = config.guide_channels[1], config.guide_channels[2]

        self.stem = nn.conv_bn_gelu(2, 3, e1, stride=2, rng=rng)
        self.enc2 = nn.conv_bn_gelu(2, e1, e2, stride=2, rng=rng)
        self.enc3 = nn.conv_bn_gelu(2, e2, e3, stride=2, rng=rng)
        self.enc4 = nn.conv_bn_gelu(2, e3, e4, stride=2, rng=rng)

        self.dec16 = nn.conv_bn_gelu(2, e4, c16, rng=rng)
        self.up8 = nn.deconv_bn_gelu(2, c16, c8, rng=rng)
        self.mix8 = nn.conv_bn_gelu(2, c8 + e3, c8, rng=rng)
        self.up4 = nn.deconv_bn_gelu(2, c8, c4, rng=rng)
        self.mix4 = nn.conv_bn_gelu(2, c4 + e2, c4, rng=rng)

        self.guide_full = nn.conv_bn_gelu(2, 3, g1, rng=rng)
        self.guide_half = nn.conv_bn_gelu(2, g1, g2, stride=2, rng=rng)

    def _tower(self, img: Tensor) -> dict:
        s2 = self.stem(img)
        s4 = self.enc2(s2)
        s8 = self.enc3(s4)
        s16 = self.enc4(s8)
        f16 = self.dec16(s16)
        f8 = self.mix8(T.concat([self.up8(f16), s8], axis=1))
        f4 = self.mix4(T.concat([self.up4(f8), s4], axis=1))
        return {4: f4, 8: f8, 16: f16}

    def forward(self, left: Tensor, right: Tensor):
        if left.shape != right.shape:
            raise T.ShapeError(f"left/right shape mismatch: {left.shape} vs {right.shape}")
        if left.ndim != 4 or left.shape[1] != 3:
            raise T.ShapeError(f"expected [B, 3, H, W] images, got {left.shape}")
        _, _, h, w = left.shape
        if h % 16 or w % 16:
            raise T.ShapeError(f"image dims must be divisible by 16, got {h}x{w}")

        pyr_l = FeaturePyramid(feats=self._tower(left))
        pyr_r = FeaturePyramid(feats=self._tower(right))
        gf = self.guide_full(left)
        pyr_l.guides[1] = gf
        pyr_l.guides[2] = self.guide_half(gf)
        return pyr_l, pyr_r


def extract_features(backbone: Backbone, left: Tensor, right: Tensor):
    return backbone(left, right)
