"""Full stereo network: features -> cost volume -> 3D aggregation -> top-k
regression -> stacked upsampling stages to full resolution."""

from __future__ import annotations

import numpy as np

from . import nn
from . import tensor as T
from .aggregate3d import DisparityMap, HourglassAggregator, regress_disparity
from .backbone import Backbone
from .config import ModelConfig
from .costvol import build_cost_volume
from .esm import EsmStage, EsmStageConfig
from .tensor import ShapeError, Tensor


class _StageStack(nn.Module):
    def __init__(self, stages):
        super().__init__()
        self.stages = list(stages)
        for i, stage in enumerate(stages):
            self._modules[f"stage{i}"] = stage


class StereoNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        rng = np.random.default_rng(config.seed)

        self.backbone = Backbone(config, rng)
        volume_channels = config.n_groups if config.kind == "gwc" else 1
        self.aggregate3d = HourglassAggregator(
            volume_channels, config.agg_base, config.agg_channel, rng
        )
        stages = []
        for s in config.stage_scales:
            stages.append(EsmStage(EsmStageConfig(
                in_scale=s,
                out_scale=s // 2,
                mix_channels=config.mix_channels[s],
                guide_in_channels=config.guidance_channels(s),
                guide_out_channels=config.guidance_channels(s // 2),
                refine_channels=config.refine_channels,
            ), rng))
        self.esm = _StageStack(stages)

    def forward(self, left: Tensor, right: Tensor) -> list[DisparityMap]:
        """Return disparity maps coarse to fine; the last is full resolution."""
        cfg = self.config
        scale = cfg.scale
        if left.shape[-1] // scale < cfg.d_max // scale:
            raise ShapeError(
                f"image width {left.shape[-1]} too small for d_max {cfg.d_max} "
                f"at scale 1/{scale}"
            )
        pyr_l, pyr_r = self.backbone(left, right)
        volume = build_cost_volume(cfg.kind, pyr_l.feats[scale], pyr_r.feats[scale],
                                   cfg.d_max // scale, cfg.n_groups, scale)
        agg = self.aggregate3d(volume.data)
        disp = regress_disparity(agg, cfg.top_k, scale)

        maps = [disp]
        for stage in self.esm.stages:
            disp = stage(disp, pyr_l)
            maps.append(disp)

        final = maps[-1]
        maps[-1] = DisparityMap(data=T.clamp(final.data, 0.0, float(cfg.d_max)),
                                scale=final.scale)
        return maps

    def zero_refinement_heads(self):
        """Weight surgery: upsampling becomes exactly iterated scaled bilinear."""
        for stage in self.esm.stages:
            stage.refine.zero_head()
