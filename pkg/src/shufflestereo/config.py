"""Model and run configuration.

Variants differ in which feature scale feeds the cost volume (and therefore
how many upsampling stages are stacked) and in the aggregation channel budget:

  S       volume at 1/16, channel parameter 4, top-k 1, 4 upsample stages
  M       volume at 1/8,  channel parameter 8, top-k 1, 3 upsample stages
  L       volume at 1/4,  channel parameter 16, top-k 2, 2 upsample stages
  S-desk  S channel budget with the volume at 1/4 so the 3-level hourglass
          survives desk-sized inputs (D_max 32, 64x128 crops); top-k 2

The full-scale presets keep the published training geometry (D_max 192); the
desk presets are what the tests and the overfit harness run.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict


VARIANTS = ("S", "M", "L", "S-desk")
KINDS = ("gwc", "nc")


@dataclass
class ModelConfig:
    variant: str = "S-desk"
    kind: str = "gwc"  # gwc | nc
    d_max: int = 32
    n_groups: int = 8
    agg_base: int = 8  # hourglass channel parameter i (shared by all variants)
    # encoder stage widths at 1/2, 1/4, 1/8, 1/16
    enc_channels: tuple = (16, 24, 32, 48)
    # decoder output widths per feature scale
    feat_channels: dict = field(default_factory=lambda: {4: 48, 8: 64, 16: 96})
    guide_channels: dict = field(default_factory=lambda: {1: 4, 2: 8})
    # fusion width per upsample-stage input scale
    mix_channels: dict = field(default_factory=lambda: {16: 32, 8: 32, 4: 24, 2: 16})
    refine_channels: tuple = (16, 24)
    seed: int = 0

    @property
    def scale(self) -> int:
        return {"S": 16, "M": 8, "L": 4, "S-desk": 4}[self.variant]

    @property
    def agg_channel(self) -> int:
        return {"S": 4, "M": 8, "L": 16, "S-desk": 4}[self.variant]

    @property
    def top_k(self) -> int:
        # k=2 for the 1/4 volume, k=1 at 1/8 and 1/16
        return 2 if self.scale == 4 else 1

    @property
    def stage_scales(self) -> list:
        """Input scales of the stacked upsample stages, coarse to fine."""
        scales = []
        s = self.scale
        while s > 1:
            scales.append(s)
            s //= 2
        return scales

    def guidance_channels(self, scale: int) -> int:
        if scale in self.feat_channels:
            return self.feat_channels[scale]
        return self.guide_channels[scale]

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown cost-volume kind {self.kind!r}; choose from {KINDS}")
        if self.d_max % 16 != 0:
            raise ValueError(f"d_max must be divisible by 16, got {self.d_max}")
        for s, c in self.feat_channels.items():
            if self.kind == "gwc" and c % self.n_groups != 0:
                raise ValueError(f"feature channels at 1/{s} ({c}) not divisible by "
                                 f"n_groups ({self.n_groups})")
        for s in self.stage_scales:
            if self.mix_channels[s] % 4 != 0:
                raise ValueError(f"mix_channels at 1/{s} must be divisible by 4 "
                                 "(pixel shuffle)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        for key in ("feat_channels", "guide_channels", "mix_channels"):
            if key in d:
                d[key] = {int(k): v for k, v in d[key].items()}
        for key in ("enc_channels", "refine_channels"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d).validate()


def desk_preset(kind: str = "gwc", seed: int = 0) -> ModelConfig:
    """Small configuration used by tests and the overfit harness."""
    return ModelConfig(
        variant="S-desk",
        kind=kind,
        d_max=32,
        n_groups=8,
        enc_channels=(8, 12, 16, 24),
        feat_channels={4: 24, 8: 32, 16: 48},
        mix_channels={16: 16, 8: 16, 4: 16, 2: 16},
        refine_channels=(12, 16),
        seed=seed,
    ).validate()


def full_preset(variant: str = "L", kind: str = "gwc", seed: int = 0) -> ModelConfig:
    """Published-scale geometry (D_max 192); kept as documentation/config."""
    return ModelConfig(variant=variant, kind=kind, d_max=192, seed=seed).validate()
