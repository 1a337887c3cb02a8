"""Upsampling-stage properties: residual identity and block contracts."""

import numpy as np
import pytest

import shufflestereo.tensor as T
from shufflestereo.config import desk_preset
from shufflestereo.esm import FMBlock, FuseBlock, RefineHourglass2d
from shufflestereo.model import StereoNet
from shufflestereo.tensor import ShapeError, Tensor


def test_fm_block_reduces_to_identity_with_zero_weights():
    fm = FMBlock(8, np.random.default_rng(0))
    for _, p in fm.named_parameters():
        p.data = np.zeros_like(p.data)
    x = Tensor(np.random.default_rng(1).standard_normal((2, 8, 4, 4)),
               dtype=np.float32)
    out = fm(x)
    assert np.array_equal(out.data, x.data)


def test_fm_block_rejects_odd_channels():
    with pytest.raises(ShapeError):
        FMBlock(7, np.random.default_rng(0))


def test_fuse_block_requires_matching_scales():
    fuse = FuseBlock(guide_channels=4, mix_channels=8,
                     rng=np.random.default_rng(0))
    with pytest.raises(ShapeError):
        fuse(Tensor(np.zeros((1, 4, 4))), Tensor(np.zeros((1, 4, 8, 8))))


def test_refine_hourglass_rejects_misaligned_dims():
    hg = RefineHourglass2d(4, (4, 6), np.random.default_rng(0))
    with pytest.raises(ShapeError):
        hg(Tensor(np.zeros((1, 2, 6, 8))), Tensor(np.zeros((1, 2, 6, 8))))


def test_refine_zero_head_emits_zero_residual():
    hg = RefineHourglass2d(4, (4, 6), np.random.default_rng(0))
    hg.zero_head()
    out = hg(Tensor(np.random.default_rng(1).standard_normal((1, 2, 8, 8)),
                    dtype=np.float32),
             Tensor(np.random.default_rng(2).standard_normal((1, 2, 8, 8)),
                    dtype=np.float32))
    assert np.array_equal(out.data, np.zeros_like(out.data))


def _iterated_bilinear(disp, stages):
    out = disp
    for _ in range(stages):
        out = T.resize(T.mul(out, 2.0), scale=2, mode="bilinear")
    return out.data


def test_stack_with_zeroed_heads_is_pure_bilinear_chain():
    model = StereoNet(desk_preset(seed=0))
    model.zero_refinement_heads()
    model.eval()
    rng = np.random.default_rng(3)
    left = Tensor(rng.random((1, 3, 32, 64), dtype=np.float32))
    right = Tensor(rng.random((1, 3, 32, 64), dtype=np.float32))
    maps = model(left, right)
    coarse, final = maps[0], maps[-1]
    n_stages = len(maps) - 1
    expected = _iterated_bilinear(coarse.data, n_stages)
    assert final.scale == 1
    assert np.abs(final.data.data - expected).max() < 1e-6


def test_stage_scales_halve_to_full_resolution():
    model = StereoNet(desk_preset(seed=0))
    model.eval()
    rng = np.random.default_rng(4)
    left = Tensor(rng.random((1, 3, 32, 64), dtype=np.float32))
    right = Tensor(rng.random((1, 3, 32, 64), dtype=np.float32))
    maps = model(left, right)
    scales = [m.scale for m in maps]
    assert scales == [4, 2, 1]
    assert maps[-1].data.shape == (1, 32, 64)
    assert (maps[-1].data.data >= 0).all()
    assert (maps[-1].data.data <= model.config.d_max).all()
