"""Multi-scale training loss.

Each predicted map is supervised against the ground truth bilinearly resized
to its resolution with values divided by the scale (disparity is measured in
pixels of the current resolution). The per-scale term is the masked mean of
smooth-L1; terms are combined with weights assigned finest-first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .aggregate3d import DisparityMap
from .tensor import Tensor


@dataclass
class LossWeights:
    """Per-scale weights, finest first; extra coarser scales reuse the last."""

    values: tuple = (1.0, 1.0 / 6.0, 1.0 / 10.0)

    def for_scales(self, n: int) -> list:
        out = list(self.values[:n])
        while len(out) < n:
            out.append(self.values[-1])
        return out


@dataclass
class LossResult:
    total: Tensor
    per_scale: list = field(default_factory=list)
    empty_scale_count: int = 0


def downscale_gt(gt: DisparityMap, scale: int):
    """Resize GT to 1/scale with values divided by scale; mask via nearest."""
    if scale == 1:
        return gt.data.data, gt.valid_mask()
    vals = T.resize(gt.data.detach(), scale=1.0 / scale, mode="bilinear").data / scale
    mask = gt.valid_mask().astype(np.float32)
    mask_t = T.resize(Tensor(mask), scale=1.0 / scale, mode="nearest").data > 0.5
    return vals, mask_t


def multiscale_loss(preds: list[DisparityMap], gt_full: DisparityMap,
                    weights: LossWeights | None = None) -> LossResult:
    """preds are ordered coarse to fine with the finest at full resolution."""
    weights = weights or LossWeights()
    lambdas = weights.for_scales(len(preds))  # finest-first
    result = LossResult(total=Tensor(np.zeros((), dtype=preds[0].data.dtype)))
    terms = []
    for pred, lam in zip(reversed(preds), lambdas):
        gt_vals, mask = downscale_gt(gt_full, pred.scale)
        if pred.data.shape != gt_vals.shape:
            raise T.ShapeError(f"prediction {pred.data.shape} vs resized GT "
                               f"{gt_vals.shape} at scale 1/{pred.scale}")
        n_valid = int(mask.sum())
        if n_valid == 0:
            result.empty_scale_count += 1
            result.per_scale.append(0.0)
            continue
        maskf = Tensor(mask.astype(pred.data.dtype) / n_valid)
        diff = T.add(pred.data, Tensor(-gt_vals, dtype=pred.data.dtype))
        term = T.tsum(T.mul(T.smooth_l1(diff), maskf))
        result.per_scale.append(float(term.data))
        terms.append(T.mul(term, lam))
    if terms:
        total = terms[0]
        for t in terms[1:]:
            total = T.add(total, t)
        result.total = total
    return result
