"""Evaluation metrics: end-point error, D1 outlier rate, bad-sigma rates."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class EmptyMaskError(ValueError):
    pass


def _check(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray):
    if pred.shape != gt.shape or pred.shape != mask.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape}, gt {gt.shape}, "
                         f"mask {mask.shape}")
    n = int(mask.sum())
    if n == 0:
        raise EmptyMaskError("no valid pixels under the mask")
    return n


def epe(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Mean absolute disparity error over valid pixels, in pixels."""
    n = _check(pred, gt, mask)
    return float(np.abs(pred - gt)[mask].sum() / n)


def bad_sigma(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray,
              sigma: float) -> float:
    """Percent of valid pixels with |err| strictly greater than sigma."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    n = _check(pred, gt, mask)
    err = np.abs(pred - gt)
    return float(100.0 * (err[mask] > sigma).sum() / n)


def d1(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray) -> float:
    """Percent of valid pixels with |err| > max(3 px, 0.05 * gt)."""
    n = _check(pred, gt, mask)
    err = np.abs(pred - gt)
    thresh = np.maximum(3.0, 0.05 * gt)
    return float(100.0 * (err[mask] > thresh[mask]).sum() / n)


@dataclass
class EvalReport:
    epe: float
    d1: float
    bad_sigma: dict = field(default_factory=dict)  # sigma -> percent
    valid_pixel_count: int = 0

    def to_text(self) -> str:
        lines = [f"epe={self.epe:.6f}", f"d1={self.d1:.6f}"]
        for s in sorted(self.bad_sigma):
            lines.append(f"bad_{s:g}={self.bad_sigma[s]:.6f}")
        lines.append(f"valid_pixel_count={self.valid_pixel_count}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps({
            "epe": self.epe,
            "d1": self.d1,
            "bad_sigma": {f"{k:g}": v for k, v in self.bad_sigma.items()},
            "valid_pixel_count": self.valid_pixel_count,
        }, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        d = json.loads(text)
        return cls(
            epe=d["epe"],
            d1=d["d1"],
            bad_sigma={float(k): v for k, v in d["bad_sigma"].items()},
            valid_pixel_count=d["valid_pixel_count"],
        )


def evaluate(pred: np.ndarray, gt: np.ndarray, mask: np.ndarray,
             sigmas=(1.0, 2.0, 3.0)) -> EvalReport:
    return EvalReport(
        epe=epe(pred, gt, mask),
        d1=d1(pred, gt, mask),
        bad_sigma={s: bad_sigma(pred, gt, mask, s) for s in sigmas},
        valid_pixel_count=int(mask.sum()),
    )
