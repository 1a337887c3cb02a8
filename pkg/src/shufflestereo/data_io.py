"""Dataset I/O: PFM disparity maps, KITTI-style 16-bit PNG disparity,
manifest-driven sample loading, synthetic random-dot stereograms, batching."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .aggregate3d import DisparityMap
from .tensor import Tensor


class DataError(ValueError):
    pass


@dataclass
class StereoSample:
    left: np.ndarray   # [3, H, W] in [0, 1]
    right: np.ndarray  # [3, H, W] in [0, 1]
    gt: np.ndarray     # [H, W] disparity in pixels, full resolution
    valid: np.ndarray  # bool [H, W]
    id: str = ""


# -- PFM ----------------------------------------------------------------------


def read_pfm(path) -> tuple[np.ndarray, float]:
    """Read a single-channel PFM file. Returns (map [H, W], abs(scale)).

    Rows are stored bottom-up; the sign of the scale encodes endianness.
    """
    with open(path, "rb") as f:
        magic = f.readline().rstrip()
        if magic == b"PF":
            raise DataError(f"{path}: color PFM (3 channels) is unsupported")
        if magic != b"Pf":
            raise DataError(f"{path}: bad magic {magic!r}, expected b'Pf'")
        dims = f.readline().split()
        if len(dims) != 2:
            raise DataError(f"{path}: malformed dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(f.readline().strip())
        if scale == 0:
            raise DataError(f"{path}: zero scale")
        endian = "<" if scale < 0 else ">"
        payload = f.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise DataError(f"{path}: truncated payload ({len(payload)} of "
                            f"{4 * w * h} bytes)")
        data = np.frombuffer(payload, dtype=endian + "f4").reshape(h, w)
        return np.ascontiguousarray(data[::-1]).astype(np.float32), abs(scale)


def write_pfm(path, disparity: np.ndarray, scale: float = 1.0):
    arr = np.asarray(disparity, dtype=np.float32)
    if arr.ndim != 2:
        raise DataError(f"write_pfm expects a 2D map, got shape {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(f"{-abs(scale)}\n".encode())  # negative -> little-endian
        f.write(arr[::-1].astype("<f4").tobytes())


# -- 16-bit PNG disparity -----------------------------------------------------


def read_disparity_png16(path) -> DisparityMap:
    """KITTI encoding: disparity = raw / 256; raw 0 marks an invalid pixel."""
    img = Image.open(path)
    if img.mode not in ("I", "I;16", "I;16B"):
        raise DataError(f"{path}: expected 16-bit grayscale PNG, got mode {img.mode!r}")
    raw = np.asarray(img, dtype=np.uint32)
    if raw.ndim != 2:
        raise DataError(f"{path}: expected single-channel image")
    disp = (raw / 256.0).astype(np.float32)
    valid = raw > 0
    return DisparityMap(data=Tensor(disp[None]), scale=1, valid=valid[None])


def write_disparity_png16(path, disparity: np.ndarray, valid: np.ndarray | None = None):
    arr = np.asarray(disparity, dtype=np.float64)
    raw = np.round(arr * 256.0).clip(0, 65535).astype(np.uint16)
    if valid is not None:
        raw = np.where(valid, np.maximum(raw, 1), 0).astype(np.uint16)
    Image.fromarray(raw).save(path, format="PNG")  # uint16 -> 16-bit grayscale


# -- synthetic random-dot stereograms ------------------------------------------


def generate_random_dot_pair(height: int, width: int, d_max: int, block: int,
                             seed: int, disparity_step: int = 1) -> StereoSample:
    """Piecewise-constant disparity field of block x block tiles.

    The right view is the left view warped by the field; right-view collisions
    keep the nearer (larger-disparity) source, and left pixels that are either
    out of frame or occluded in the right view are marked invalid so the GT is
    exact by construction: left(x, y) == right(x - d(x, y), y) on valid pixels.
    """
    if height % 16 or width % 16:
        raise DataError(f"dims must be divisible by 16, got {height}x{width}")
    if not 0 < d_max < width // 4:
        raise DataError(f"d_max must be in (0, width/4), got {d_max}")
    rng = np.random.default_rng(seed)

    ty = (height + block - 1) // block
    tx = (width + block - 1) // block
    n_steps = d_max // disparity_step
    if n_steps < 1:
        raise DataError("disparity_step too large for d_max")
    tiles = rng.integers(0, n_steps, size=(ty, tx)) * disparity_step
    disp = np.repeat(np.repeat(tiles, block, axis=0), block, axis=1)
    disp = disp[:height, :width].astype(np.float32)

    gray = (rng.random((height, width)) > 0.5).astype(np.float32)
    gray = 0.15 + 0.7 * gray  # keep dots away from the [0, 1] edges
    left = np.broadcast_to(gray, (3, height, width)).copy()

    right_gray = 0.15 + 0.7 * (rng.random((height, width)) > 0.5).astype(np.float32)
    valid = np.zeros((height, width), dtype=bool)
    d_int = disp.astype(np.int64)
    xs = np.arange(width)
    for y in range(height):
        targets = xs - d_int[y]
        in_frame = targets >= 0
        # among sources colliding on a target, the largest disparity wins;
        # targets are unique per disparity value, so process far-to-near
        winner = np.full(width, -1, dtype=np.int64)
        order = np.argsort(d_int[y], kind="stable")
        src = xs[order]
        tgt = targets[order]
        keep = tgt >= 0
        winner[tgt[keep]] = src[keep]
        right_gray[y, tgt[keep]] = gray[y, src[keep]]
        visible = np.zeros(width, dtype=bool)
        survived = winner[targets[in_frame]] == xs[in_frame]
        visible[xs[in_frame]] = survived
        valid[y] = visible
    right = np.broadcast_to(right_gray, (3, height, width)).copy()

    return StereoSample(left=left, right=right, gt=disp, valid=valid,
                        id=f"rds_{seed}")


# -- manifests ------------------------------------------------------------------


def read_manifest(path) -> list[tuple[str, str, str]]:
    """Line format: left right gt, whitespace separated; '#' starts a comment."""
    entries = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 paths, got {len(parts)}")
            entries.append(tuple(
                p if os.path.isabs(p) else os.path.join(base, p) for p in parts
            ))
    return entries


def _read_image(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def load_sample(left_path, right_path, gt_path, sample_id: str = "") -> StereoSample:
    left = _read_image(left_path)
    right = _read_image(right_path)
    if gt_path.endswith(".pfm"):
        gt, _ = read_pfm(gt_path)
        valid = gt > 0
    elif gt_path.endswith(".png"):
        dm = read_disparity_png16(gt_path)
        gt, valid = dm.data.data[0], dm.valid[0]
    else:
        raise DataError(f"{gt_path}: unsupported GT format (use .pfm or .png)")
    if left.shape != right.shape or left.shape[1:] != gt.shape:
        raise DataError(f"sample {sample_id or left_path}: shapes disagree "
                        f"(left {left.shape}, right {right.shape}, gt {gt.shape})")
    return StereoSample(left=left, right=right, gt=gt.astype(np.float32),
                        valid=valid, id=sample_id or os.path.basename(left_path))


def load_manifest(path) -> list[StereoSample]:
    return [load_sample(*entry, sample_id=f"{i:04d}")
            for i, entry in enumerate(read_manifest(path))]


# -- batching -------------------------------------------------------------------


def batch(samples: list[StereoSample], crop: tuple[int, int] | None = None,
          seed: int = 0, center: bool = False):
    """Stack samples into [B, ...] arrays with identical crops per sample.

    Random crops (training) or center crops (eval); deterministic per seed.
    """
    rng = np.random.default_rng(seed)
    lefts, rights, gts, valids = [], [], [], []
    for s in samples:
        _, h, w = s.left.shape
        if crop is None:
            ch, cw = h, w
        else:
            ch, cw = crop
            if ch % 16 or cw % 16:
                raise DataError(f"crop dims must be divisible by 16, got {ch}x{cw}")
            if ch > h or cw > w:
                raise DataError(f"crop {ch}x{cw} larger than image {h}x{w}")
        if center:
            oy, ox = (h - ch) // 2, (w - cw) // 2
        else:
            oy = int(rng.integers(0, h - ch + 1))
            ox = int(rng.integers(0, w - cw + 1))
        lefts.append(s.left[:, oy:oy + ch, ox:ox + cw])
        rights.append(s.right[:, oy:oy + ch, ox:ox + cw])
        gts.append(s.gt[oy:oy + ch, ox:ox + cw])
        valids.append(s.valid[oy:oy + ch, ox:ox + cw])
    return (np.stack(lefts), np.stack(rights), np.stack(gts), np.stack(valids))
