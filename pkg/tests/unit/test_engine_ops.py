"""Tests for the differentiable primitives in engine.ops."""

import numpy as np
import pytest

from hsi_detect.custom_exceptions import ContractError
from hsi_detect.custom_exceptions import DimensionError
from hsi_detect.engine import ops
from hsi_detect.engine.ops import conv_output_extent
from hsi_detect.engine.tensor import Tensor


class TestMatmul:
    """Test matrix products."""

    def test_hand_computed_product(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])

        np.testing.assert_array_equal(ops.matmul(a, b).data, [[19.0, 22.0], [43.0, 50.0]])

    def test_identity_and_zero(self, rng):
        a = Tensor(rng.normal(size=(3, 3)))

        np.testing.assert_allclose((a @ Tensor(np.eye(3))).data, a.data)
        np.testing.assert_array_equal((a @ Tensor(np.zeros((3, 2)))).data, np.zeros((3, 2)))

    def test_batched_operands_broadcast(self, rng):
        a = Tensor(rng.normal(size=(4, 2, 3)))
        b = Tensor(rng.normal(size=(3, 5)))

        assert ops.matmul(a, b).shape == (4, 2, 5)

    def test_mismatch_names_both_shapes(self):
        with pytest.raises(DimensionError) as exc_info:
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

        assert "(2, 3)" in str(exc_info.value)


class TestConv2d:
    """Test cross-correlation and its extent rule."""

    def test_unit_kernel_is_identity(self, rng):
        x = Tensor(rng.uniform(size=(1, 5, 5)))

        out = ops.conv2d(x, Tensor(np.ones((1, 1, 1, 1))))

        np.testing.assert_array_equal(out.data, x.data)

    def test_top_left_delta_shifts_down_right(self, rng):
        x = Tensor(rng.uniform(size=(1, 4, 4)))
        kernel = np.zeros((1, 1, 3, 3))
        kernel[0, 0, 0, 0] = 1.0

        out = ops.conv2d(x, Tensor(kernel), pad=1).data[0]

        np.testing.assert_array_equal(out[1:, 1:], x.data[0, :-1, :-1])
        assert np.all(out[0] == 0.0)
        assert np.all(out[:, 0] == 0.0)

    def test_all_ones_sums_the_window(self):
        out = ops.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))

        assert out.shape == (1, 1, 1)
        assert out.data.item() == 9.0

    def test_stride_two_halves_extent(self, rng):
        x = Tensor(rng.uniform(size=(2, 3, 8, 8)))

        out = ops.conv2d(x, Tensor(rng.normal(size=(4, 3, 3, 3))), stride=2, pad=1)

        assert out.shape == (2, 4, 4, 4)

    def test_channel_mismatch(self):
        with pytest.raises(DimensionError):
            ops.conv2d(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))

    @pytest.mark.parametrize(
        ("extent", "kernel", "stride", "pad", "expected"),
        [(8, 3, 1, 1, 8), (8, 3, 2, 1, 4), (3, 3, 1, 0, 1), (5, 1, 1, 0, 5)],
    )
    def test_output_extent(self, extent, kernel, stride, pad, expected):
        assert conv_output_extent(extent, kernel, stride, pad) == expected

    @pytest.mark.parametrize(
        ("extent", "kernel", "stride", "pad"),
        [(8, 2, 1, 0), (8, 3, 2, 0), (2, 5, 1, 1), (8, 3, 0, 1)],
    )
    def test_rejected_extents(self, extent, kernel, stride, pad):
        with pytest.raises(DimensionError):
            conv_output_extent(extent, kernel, stride, pad)

    def test_depthwise_matches_grouped_conv(self, rng):
        x = rng.uniform(size=(3, 6, 6))
        kernel = rng.normal(size=(3, 3, 3))

        out = ops.depthwise_conv2d(Tensor(x), Tensor(kernel)).data

        for c in range(3):
            single = ops.conv2d(Tensor(x[c : c + 1]), Tensor(kernel[c][None, None]), pad=1).data
            np.testing.assert_allclose(out[c], single[0], atol=1e-12)


class TestSoftmax:
    """Test softmax and log-softmax."""

    def test_symmetric_pair(self):
        np.testing.assert_allclose(ops.softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])

    def test_reference_values(self):
        out = ops.softmax(Tensor([1.0, 2.0, 3.0])).data

        np.testing.assert_allclose(out, [0.09003, 0.24473, 0.66524], atol=1e-5)

    def test_large_logits_stay_finite(self):
        out = ops.softmax(Tensor([1000.0, 0.0])).data

        assert np.all(np.isfinite(out))
        assert out[0] == pytest.approx(1.0)

    def test_log_softmax_agrees(self, rng):
        x = Tensor(rng.normal(size=(4, 5)))

        np.testing.assert_allclose(
            np.exp(ops.log_softmax(x, axis=-1).data), ops.softmax(x, axis=-1).data, atol=1e-12
        )


class TestElementwiseAndReductions:
    """Test pointwise ops, reductions and reshaping."""

    def test_relu(self):
        np.testing.assert_array_equal(ops.relu(Tensor([-1.0, 2.0])).data, [0.0, 2.0])

    def test_constant_mean_and_variance(self):
        x = Tensor(np.full((3, 4), 2.5))

        assert ops.mean(x).item() == pytest.approx(2.5)
        assert ops.variance(x).item() == pytest.approx(0.0)

    def test_gelu_fixed_points(self):
        out = ops.gelu(Tensor([0.0, 10.0, -10.0])).data

        np.testing.assert_allclose(out, [0.0, 10.0, 0.0], atol=1e-6)

    def test_nearest_upsample(self):
        out = ops.nearest_upsample(Tensor([[1.0, 2.0], [3.0, 4.0]])).data

        np.testing.assert_array_equal(
            out,
            [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]],
        )

    def test_broadcast_mismatch(self):
        with pytest.raises(DimensionError):
            ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))

    def test_concat_and_transpose_shapes(self, rng):
        a = Tensor(rng.normal(size=(2, 3)))
        b = Tensor(rng.normal(size=(2, 4)))

        assert ops.concat([a, b], axis=1).shape == (2, 7)
        assert ops.transpose(a).shape == (3, 2)

    def test_l2_normalize_unit_rows(self, rng):
        out = ops.l2_normalize(Tensor(rng.normal(size=(5, 3))), axis=-1).data

        np.testing.assert_allclose(np.linalg.norm(out, axis=-1), np.ones(5))

    def test_global_avg_pool(self):
        x = Tensor(np.arange(8.0).reshape(2, 2, 2))

        np.testing.assert_allclose(ops.global_avg_pool(x).data, [1.5, 5.5])

    def test_ensure_scalar(self):
        with pytest.raises(ContractError):
            ops.ensure_scalar(Tensor([1.0, 2.0]))
