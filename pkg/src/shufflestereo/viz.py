"""Fixed visualization palettes so image goldens are stable.

Disparity maps use a turbo-style polynomial colormap over [0, d_max].
Error maps use a blue -> red ramp over the relative outlier magnitude
min(|err| / max(3, 0.05 * gt), 1); invalid pixels are black.
"""

from __future__ import annotations

import numpy as np

# Polynomial approximation of the turbo colormap (degree-5 fits per channel).
_TURBO_R = (0.13572138, 4.61539260, -42.66032258, 132.13108234, -152.94239396, 59.28637943)
_TURBO_G = (0.09140261, 2.19418839, 4.84296658, -14.18503333, 4.27729857, 2.82956604)
_TURBO_B = (0.10667330, 12.64194608, -60.58204836, 110.36276771, -89.90310912, 27.34824973)


def _poly(t: np.ndarray, coeffs) -> np.ndarray:
    out = np.zeros_like(t)
    for c in reversed(coeffs):
        out = out * t + c
    return out


def turbo(t: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB uint8, shape [..., 3]."""
    t = np.clip(t, 0.0, 1.0)
    rgb = np.stack([_poly(t, _TURBO_R), _poly(t, _TURBO_G), _poly(t, _TURBO_B)], axis=-1)
    return (np.clip(rgb, 0.0, 1.0) * 255).astype(np.uint8)


def colorize_disparity(disp: np.ndarray, d_max: float) -> np.ndarray:
    return turbo(np.asarray(disp, dtype=np.float64) / d_max)


def blue_red(t: np.ndarray) -> np.ndarray:
    """Linear blue (low) -> red (high) ramp; RGB uint8."""
    t = np.clip(t, 0.0, 1.0)
    r = t
    g = 0.25 * (1.0 - np.abs(2.0 * t - 1.0))
    b = 1.0 - t
    return (np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)


def error_map(pred: np.ndarray, gt: np.ndarray, valid: np.ndarray) -> np.ndarray:
    err = np.abs(np.asarray(pred, dtype=np.float64) - gt)
    thresh = np.maximum(3.0, 0.05 * gt)
    t = np.clip(err / thresh, 0.0, 1.0)
    img = blue_red(t)
    img[~valid] = 0
    return img
