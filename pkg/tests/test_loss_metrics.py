"""Loss fixtures and metric oracles."""

import numpy as np
import pytest

import shufflestereo.tensor as T
from shufflestereo.aggregate3d import DisparityMap
from shufflestereo.losses import LossWeights, downscale_gt, multiscale_loss
from shufflestereo.metrics import (EmptyMaskError, EvalReport, bad_sigma, d1,
                                   epe, evaluate)
from shufflestereo.tensor import Tensor


def _map(values, scale=1, valid=None):
    return DisparityMap(data=Tensor(np.asarray(values, dtype=np.float32)),
                        scale=scale, valid=valid)


# -- loss --------------------------------------------------------------------


def test_loss_weights_finest_first_and_padding():
    w = LossWeights()
    assert w.for_scales(3) == [1.0, 1.0 / 6.0, 1.0 / 10.0]
    assert w.for_scales(5) == [1.0, 1.0 / 6.0, 1.0 / 10.0, 1.0 / 10.0, 1.0 / 10.0]
    assert w.for_scales(1) == [1.0]


def test_constant_half_pixel_offset_costs_an_eighth():
    gt = np.full((1, 8, 8), 4.0, dtype=np.float32)
    pred = _map(gt + 0.5)
    loss = multiscale_loss([pred], _map(gt))
    assert abs(float(loss.total.data) - 0.125) < 1e-6
    assert loss.per_scale == pytest.approx([0.125], abs=1e-6)


def test_multiscale_terms_use_descending_weights():
    gt = np.full((1, 16, 16), 4.0, dtype=np.float32)
    # every scale off by exactly 0.5 disparity at its own resolution
    preds = [
        _map(np.full((1, 4, 4), 1.0 + 0.5, dtype=np.float32), scale=4),
        _map(np.full((1, 8, 8), 2.0 + 0.5, dtype=np.float32), scale=2),
        _map(np.full((1, 16, 16), 4.0 + 0.5, dtype=np.float32), scale=1),
    ]
    loss = multiscale_loss(preds, _map(gt))
    expected = 0.125 * (1.0 + 1.0 / 6.0 + 1.0 / 10.0)
    assert abs(float(loss.total.data) - expected) < 1e-6


def test_empty_scale_counts_and_contributes_zero():
    gt = _map(np.full((1, 8, 8), 4.0, dtype=np.float32),
              valid=np.zeros((1, 8, 8), dtype=bool))
    loss = multiscale_loss([_map(np.zeros((1, 8, 8), dtype=np.float32))], gt)
    assert loss.empty_scale_count == 1
    assert float(loss.total.data) == 0.0


def test_downscale_gt_divides_values_by_scale():
    gt = _map(np.full((1, 8, 8), 8.0, dtype=np.float32))
    vals, mask = downscale_gt(gt, 4)
    assert vals.shape == (1, 2, 2)
    assert np.allclose(vals, 2.0)
    assert mask.all()


def test_loss_is_differentiable():
    gt = np.full((1, 8, 8), 4.0, dtype=np.float64)
    pred = Tensor(gt + 0.3, requires_grad=True)
    loss = multiscale_loss([DisparityMap(data=pred, scale=1)],
                           _map(gt))
    loss.total.backward()
    assert pred.grad is not None and np.isfinite(pred.grad).all()


# -- metrics -----------------------------------------------------------------


def _metric_oracles(pred, gt, mask, sigma):
    errs = [abs(p - g) for p, g, m in zip(pred.ravel(), gt.ravel(), mask.ravel()) if m]
    n = len(errs)
    o_epe = sum(errs) / n
    o_bad = 100.0 * sum(1 for e in errs if e > sigma) / n
    o_d1 = 100.0 * sum(
        1 for p, g, m in zip(pred.ravel(), gt.ravel(), mask.ravel())
        if m and abs(p - g) > max(3.0, 0.05 * g)) / n
    return o_epe, o_bad, o_d1


def test_metrics_match_loop_oracles_50_maps():
    rng = np.random.default_rng(0)
    for _ in range(50):
        shape = (int(rng.integers(2, 8)), int(rng.integers(2, 8)))
        gt = rng.uniform(0, 80, shape)
        pred = gt + rng.normal(0, 4, shape)
        mask = rng.random(shape) > 0.3
        if not mask.any():
            mask[0, 0] = True
        sigma = float(rng.choice([1.0, 2.0, 3.0]))
        o_epe, o_bad, o_d1 = _metric_oracles(pred, gt, mask, sigma)
        assert abs(epe(pred, gt, mask) - o_epe) < 1e-9
        assert abs(bad_sigma(pred, gt, mask, sigma) - o_bad) < 1e-9
        assert abs(d1(pred, gt, mask) - o_d1) < 1e-9


def test_d1_threshold_boundaries():
    mask = np.array([True])
    # gt=100: threshold is 5 px, an error of 4 is an inlier
    assert d1(np.array([104.0]), np.array([100.0]), mask) == 0.0
    # gt=10: threshold is 3 px, an error of 4 is an outlier
    assert d1(np.array([14.0]), np.array([10.0]), mask) == 100.0


def test_bad3_equals_d1_below_sixty_pixels():
    rng = np.random.default_rng(1)
    gt = rng.uniform(0, 59.9, (64,))
    pred = gt + rng.normal(0, 4, (64,))
    mask = np.ones(64, dtype=bool)
    assert bad_sigma(pred, gt, mask, 3.0) == d1(pred, gt, mask)


def test_bad_sigma_boundary_is_strict():
    mask = np.array([True, True])
    pred = np.array([3.0, 3.0 + 1e-6])
    gt = np.array([0.0, 0.0])
    assert bad_sigma(pred, gt, mask, 3.0) == 50.0


def test_empty_mask_raises():
    with pytest.raises(EmptyMaskError):
        epe(np.zeros(3), np.zeros(3), np.zeros(3, dtype=bool))


def test_eval_report_json_round_trip():
    rep = evaluate(np.array([1.0, 5.0]), np.array([0.0, 0.0]),
                   np.array([True, True]))
    back = EvalReport.from_json(rep.to_json())
    assert back == rep
    assert "epe=" in rep.to_text()
