"""Forward-value, shape-contract, and algebraic-law tests for the tensor ops."""

import numpy as np
import pytest

import shufflestereo.tensor as T
from shufflestereo.tensor import NumericsError, ShapeError, Tensor


def _rand(shape, seed=0, dtype=np.float64):
    return np.random.default_rng(seed).standard_normal(shape).astype(dtype)


# -- elementwise forward values ----------------------------------------------


def test_elementwise_forward_matches_numpy():
    x = _rand((3, 4), seed=1)
    y = _rand((3, 4), seed=2) + 3.0  # keep away from zero for division
    assert np.allclose(T.add(Tensor(x), Tensor(y)).data, x + y)
    assert np.allclose(T.mul(Tensor(x), Tensor(y)).data, x * y)
    assert np.allclose(T.div(Tensor(x), Tensor(y)).data, x / y)
    assert np.allclose(T.square(Tensor(x)).data, x * x)
    assert np.allclose(T.sqrt(Tensor(np.abs(x) + 1)).data, np.sqrt(np.abs(x) + 1))
    assert np.allclose(T.sigmoid(Tensor(x)).data, 1 / (1 + np.exp(-x)))
    assert np.allclose(T.clamp(Tensor(x), -0.5, 0.5).data, np.clip(x, -0.5, 0.5))


def test_gelu_fixed_points():
    out = T.gelu(Tensor(np.array([0.0, 1.0, -1.0]))).data
    assert out[0] == 0.0
    # tanh-approximate form evaluated by hand
    assert abs(out[1] - 0.8411919906082768) < 1e-12
    assert abs(out[2] - (-0.15880800939172324)) < 1e-12


def test_smooth_l1_both_branches():
    x = Tensor(np.array([0.5, 1.0, 2.0, -0.5, -2.0]))
    out = T.smooth_l1(x).data
    assert np.allclose(out, [0.125, 0.5, 1.5, 0.125, 1.5])


def test_leaky_relu_slope():
    out = T.leaky_relu(Tensor(np.array([-2.0, 3.0])), 0.1).data
    assert np.allclose(out, [-0.2, 3.0])


def test_softmax_rows_sum_to_one():
    x = Tensor(_rand((4, 7)))
    out = T.softmax(x, axis=1).data
    assert np.allclose(out.sum(axis=1), 1.0)
    ref = np.exp(x.data - x.data.max(axis=1, keepdims=True))
    assert np.allclose(out, ref / ref.sum(axis=1, keepdims=True))


# -- broadcasting rules ------------------------------------------------------


def test_singleton_broadcast_allowed():
    a = Tensor(_rand((2, 1, 4)))
    b = Tensor(_rand((2, 3, 1)))
    assert T.add(a, b).shape == (2, 3, 4)


def test_rank_mismatch_rejected():
    with pytest.raises(ShapeError):
        T.add(Tensor(_rand((2, 3))), Tensor(_rand((3,))))


def test_non_singleton_mismatch_rejected():
    with pytest.raises(ShapeError):
        T.mul(Tensor(_rand((2, 3))), Tensor(_rand((2, 4))))


# -- autodiff basics ---------------------------------------------------------


def test_backward_requires_scalar_root():
    x = Tensor(_rand((2, 2)), requires_grad=True)
    with pytest.raises(ShapeError):
        T.square(x).backward()


def test_square_gradient():
    x = Tensor(_rand((3, 3)), requires_grad=True)
    T.tsum(T.square(x)).backward()
    assert np.allclose(x.grad, 2 * x.data)


def test_gradients_accumulate_across_uses():
    x = Tensor(np.array([2.0]), requires_grad=True)
    T.tsum(T.mul(x, x)).backward()  # d/dx x*x = 2x via two paths
    assert np.allclose(x.grad, [4.0])


def test_nan_gradient_raises_with_op_name():
    x = Tensor(np.array([1.0]), requires_grad=True)
    y = T.mul(x, Tensor(np.array([np.nan])))  # d/dx is the NaN operand
    with pytest.raises(NumericsError, match="NaN gradient"):
        T.tsum(y).backward()


def test_check_finite_raises_on_inf():
    with pytest.raises(NumericsError):
        T.check_finite(T.div(Tensor(np.array([1.0])), Tensor(np.array([0.0]))))


# -- top-k -------------------------------------------------------------------


def test_topk_ties_pick_lowest_index():
    values, idx = T.topk(Tensor(np.array([[1.0, 3.0, 3.0, 2.0]])), 2, axis=1)
    assert list(idx[0]) == [1, 2]
    assert np.allclose(values.data, [[3.0, 3.0]])


def test_topk_backward_scatters_to_winners():
    x = Tensor(np.array([[1.0, 5.0, 2.0, 4.0]]), requires_grad=True)
    values, _ = T.topk(x, 2, axis=1)
    T.tsum(values).backward()
    assert np.allclose(x.grad, [[0.0, 1.0, 0.0, 1.0]])


# -- shuffles ----------------------------------------------------------------


def test_pixel_shuffle_matches_manual_oracle():
    x = _rand((1, 4, 2, 3))
    out = T.pixel_shuffle(Tensor(x), 2).data
    b, c, h, w = x.shape
    ref = (x.reshape(b, 1, 2, 2, h, w).transpose(0, 1, 4, 2, 5, 3)
           .reshape(b, 1, 2 * h, 2 * w))
    assert np.array_equal(out, ref)


def test_pixel_shuffle_unshuffle_inverse_100_shapes():
    rng = np.random.default_rng(0)
    for _ in range(100):
        r = int(rng.integers(2, 4))
        b, cr, h, w = (int(rng.integers(1, 3)), int(rng.integers(1, 4)),
                       int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        x = rng.standard_normal((b, cr * r * r, h, w))
        y = T.pixel_unshuffle(T.pixel_shuffle(Tensor(x), r), r).data
        assert np.array_equal(y, x)


def test_channel_shuffle_inverse_and_multiset_100_shapes():
    rng = np.random.default_rng(1)
    for _ in range(100):
        g = int(rng.integers(2, 5))
        per = int(rng.integers(1, 5))
        c = g * per
        x = rng.standard_normal((2, c, 3, 2))
        shuffled = T.channel_shuffle(Tensor(x), g).data
        # values are a pure channel permutation
        assert np.array_equal(np.sort(shuffled, axis=1), np.sort(x, axis=1))
        # shuffling with the complementary group count inverts it
        back = T.channel_shuffle(Tensor(shuffled), per).data
        assert np.array_equal(back, x)


# -- inputs are never mutated ------------------------------------------------


def test_ops_do_not_mutate_inputs():
    x = Tensor(_rand((1, 4, 8, 8)), requires_grad=True)
    w = Tensor(_rand((2, 4, 3, 3), seed=3), requires_grad=True)
    x_copy, w_copy = x.data.copy(), w.data.copy()
    out = T.conv(x, w, padding=1)
    out = T.gelu(out)
    out = T.resize(out, scale=2, mode="bilinear")
    out = T.pixel_unshuffle(out, 2)
    T.tsum(T.square(out)).backward()
    assert np.array_equal(x.data, x_copy)
    assert np.array_equal(w.data, w_copy)


# -- convolution oracles -----------------------------------------------------


def _conv2d_loops(x, w, stride, padding):
    b, cin, h, wid = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (wid + 2 * padding - kw) // stride + 1
    out = np.zeros((b, cout, oh, ow))
    for bi in range(b):
        for co in range(cout):
            for oy in range(oh):
                for ox in range(ow):
                    patch = xp[bi, :, oy * stride:oy * stride + kh,
                               ox * stride:ox * stride + kw]
                    out[bi, co, oy, ox] = (patch * w[co]).sum()
    return out


def test_conv2d_matches_loop_oracle():
    x = _rand((2, 3, 6, 7), seed=4)
    w = _rand((4, 3, 3, 3), seed=5)
    out = T.conv(Tensor(x), Tensor(w), stride=2, padding=1).data
    assert np.allclose(out, _conv2d_loops(x, w, 2, 1), atol=1e-12)


def test_deconv_is_conv_adjoint():
    # <conv(x), y> == <x, deconv(y)> when deconv reuses the same weight
    rng = np.random.default_rng(6)
    x = Tensor(rng.standard_normal((1, 3, 6, 6)))
    w = rng.standard_normal((4, 3, 3, 3))
    out = T.conv(x, Tensor(w), stride=2, padding=1)
    y = Tensor(rng.standard_normal(out.shape))
    # deconv weight layout is [C_in, C_out, k, k]: the conv weight reused as-is
    back = T.deconv(y, Tensor(w), stride=2, padding=1, output_padding=1)
    lhs = float((out.data * y.data).sum())
    rhs = float((x.data * back.data).sum())
    assert abs(lhs - rhs) < 1e-10


# -- resize ------------------------------------------------------------------


def test_resize_nearest_repeats_pixels():
    x = _rand((1, 1, 2, 3), seed=7)
    out = T.resize(Tensor(x), scale=2, mode="nearest").data
    assert np.array_equal(out, x.repeat(2, axis=2).repeat(2, axis=3))


def test_resize_bilinear_preserves_constants_and_ramps():
    const = T.resize(Tensor(np.full((1, 1, 4, 4), 2.5)), scale=2, mode="bilinear")
    assert np.allclose(const.data, 2.5)
    # interior samples of a linear ramp stay on the ramp (half-pixel centers)
    ramp = np.arange(8, dtype=np.float64)[None, None, None, :].repeat(4, axis=2)
    out = T.resize(Tensor(ramp), scale=2, mode="bilinear").data
    expected_centers = (np.arange(16) + 0.5) / 2 - 0.5
    interior = slice(2, 14)
    assert np.allclose(out[0, 0, 4, interior], expected_centers[interior])


# -- serialization -----------------------------------------------------------


def test_tensor_file_round_trip(tmp_path):
    for dtype in (np.float32, np.float64):
        arr = _rand((2, 3, 4), seed=8, dtype=dtype)
        path = tmp_path / f"t_{arr.dtype.name}.esmt"
        T.save_tensor(path, arr)
        back = T.load_tensor(path)
        assert back.dtype == arr.dtype
        assert np.array_equal(back, arr)


def test_tensor_file_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.esmt"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(ValueError):
        T.load_tensor(path)
