"""Forward/backward semantics of the tensor core ops."""

import numpy as np
import pytest

import wdsm.tensor as T
from wdsm.errors import DomainError, NumericError, ShapeError
from wdsm.tensor import Tape, Tensor


def _grad_of(fn, *tensors):
    with Tape() as tape:
        out = fn(*tensors)
        tape.backward(out)
    return [t.grad for t in tensors]


class TestConv2d:
    def test_identity_kernel(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.uniform(-1, 1, (3, 6, 6)).astype(np.float32))
        w = np.zeros((3, 3, 3, 3), dtype=np.float32)
        for c in range(3):
            w[c, c, 1, 1] = 1.0
        out = T.conv2d(x, Tensor(w), Tensor(np.zeros(3, dtype=np.float32)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_zero_kernel_gives_bias(self):
        x = Tensor(np.random.default_rng(1).uniform(-1, 1, (2, 4, 4)).astype(np.float32))
        w = Tensor(np.zeros((3, 2, 3, 3), dtype=np.float32))
        b = Tensor(np.array([0.5, -1.0, 2.0], dtype=np.float32))
        out = T.conv2d(x, w, b)
        for c, v in enumerate((0.5, -1.0, 2.0)):
            np.testing.assert_array_equal(out.data[c], np.full((4, 4), v, dtype=np.float32))

    def test_ones_kernel_padded_sums(self):
        # hand-evaluated padded cross-correlation of a 4x4 ones image
        x = Tensor(np.ones((1, 4, 4)))
        w = Tensor(np.ones((1, 1, 3, 3)))
        b = Tensor(np.zeros(1))
        out = T.conv2d(x, w, b).data[0]
        expected = np.array(
            [[4, 6, 6, 4], [6, 9, 9, 6], [6, 9, 9, 6], [4, 6, 6, 4]], dtype=np.float32
        )
        np.testing.assert_array_equal(out, expected)

    def test_channel_mismatch_raises(self):
        x = Tensor(np.ones((2, 4, 4)))
        w = Tensor(np.ones((1, 3, 3, 3)))
        with pytest.raises(ShapeError):
            T.conv2d(x, w, Tensor(np.zeros(1)))

    def test_linearity_bias_free(self):
        rng = np.random.default_rng(2)
        x = rng.uniform(-1, 1, (2, 8, 8))
        y = rng.uniform(-1, 1, (2, 8, 8))
        w = Tensor(rng.uniform(-1, 1, (3, 2, 3, 3)), dtype=np.float64)
        zb = Tensor(np.zeros(3, dtype=np.float64))
        a, c = 1.7, -0.3
        lhs = T.conv2d(Tensor(a * x + c * y, dtype=np.float64), w, zb).data
        rhs = a * T.conv2d(Tensor(x, dtype=np.float64), w, zb).data + c * T.conv2d(
            Tensor(y, dtype=np.float64), w, zb
        ).data
        np.testing.assert_allclose(lhs, rhs, rtol=1e-6)


class TestMaxpool2:
    def test_single_window(self):
        x = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]]))
        assert T.maxpool2(x).data[0, 0, 0] == 4.0

    def test_constant_input(self):
        x = Tensor(np.full((2, 4, 4), 3.25))
        np.testing.assert_array_equal(T.maxpool2(x).data, np.full((2, 2, 2), 3.25, np.float32))

    def test_tie_routes_to_first_position(self):
        x = Tensor(np.full((1, 2, 2), 5.0), requires_grad=True)
        (g,) = _grad_of(lambda t: T.reduce_sum(T.maxpool2(t)), x)
        np.testing.assert_array_equal(g[0], np.array([[1.0, 0.0], [0.0, 0.0]]))

    def test_odd_size_rejected(self):
        with pytest.raises(ShapeError):
            T.maxpool2(Tensor(np.zeros((1, 3, 4))))


class TestUpsample2:
    def test_single_pixel(self):
        out = T.upsample2(Tensor(np.array([[[1.0]]])))
        np.testing.assert_array_equal(out.data[0], np.ones((2, 2), np.float32))

    def test_shape(self):
        assert T.upsample2(Tensor(np.zeros((3, 8, 8)))).shape == (3, 16, 16)

    def test_backward_sums_four_children(self):
        x = Tensor(np.zeros((1, 2, 2)), requires_grad=True)
        (g,) = _grad_of(lambda t: T.reduce_sum(T.upsample2(t)), x)
        np.testing.assert_array_equal(g, np.full((1, 2, 2), 4.0, np.float32))


class TestConcatChannels:
    def test_shapes(self):
        out = T.concat_channels(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 2, 2))))
        assert out.shape == (2, 2, 2)

    def test_empty_second_operand(self):
        a = Tensor(np.random.default_rng(0).uniform(size=(2, 3, 3)))
        out = T.concat_channels(a, Tensor(np.zeros((0, 3, 3))))
        np.testing.assert_array_equal(out.data, a.data)

    def test_channel_zero_preserved(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.uniform(size=(2, 3, 3)))
        b = Tensor(rng.uniform(size=(1, 3, 3)))
        out = T.concat_channels(a, b)
        np.testing.assert_array_equal(out.data[0], a.data[0])

    def test_spatial_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            T.concat_channels(Tensor(np.zeros((1, 2, 2))), Tensor(np.zeros((1, 3, 3))))


class TestActivations:
    def test_relu_values(self):
        out = T.relu(Tensor(np.array([-1.0, 2.0])))
        np.testing.assert_array_equal(out.data, [0.0, 2.0])

    def test_softmax_equal_logits(self):
        out = T.softmax_channels(Tensor(np.zeros((2, 3, 3))))
        np.testing.assert_allclose(out.data, 0.5)

    def test_softmax_requires_two_channels(self):
        with pytest.raises(ShapeError):
            T.softmax_channels(Tensor(np.zeros((3, 2, 2))))

    def test_softmax_sums_to_one_in_open_interval(self):
        rng = np.random.default_rng(3)
        out = T.softmax_channels(Tensor(rng.uniform(-5, 5, (2, 8, 8)))).data
        np.testing.assert_allclose(out.sum(axis=0), 1.0, atol=1e-6)
        assert (out > 0).all() and (out < 1).all()

    def test_sigmoid_zero(self):
        assert T.sigmoid(Tensor(np.array(0.0))).item() == 0.5

    def test_clip_max_blocks_gradient_above_limit(self):
        x = Tensor(np.array([0.5, 2.0]), requires_grad=True)
        (g,) = _grad_of(lambda t: T.reduce_sum(T.clip_max(t, 1.0)), x)
        np.testing.assert_array_equal(g, [1.0, 0.0])


class TestMulMask:
    def test_all_ones_identity(self):
        x = Tensor(np.random.default_rng(0).uniform(size=(2, 4, 4)))
        out = T.mul_mask(x, np.ones((4, 4)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_all_zeros_blocks_value_and_gradient(self):
        x = Tensor(np.random.default_rng(1).uniform(size=(2, 4, 4)), requires_grad=True)
        with Tape() as tape:
            out = T.reduce_sum(T.mul_mask(x, np.zeros((4, 4))))
            tape.backward(out)
        assert out.item() == 0.0
        np.testing.assert_array_equal(x.grad, np.zeros_like(x.data))

    def test_single_masked_pixel_gets_zero_gradient(self):
        mask = np.ones((3, 3))
        mask[1, 2] = 0
        x = Tensor(np.ones((1, 3, 3)), requires_grad=True)
        (g,) = _grad_of(lambda t: T.reduce_sum(T.mul_mask(t, mask)), x)
        assert g[0, 1, 2] == 0.0
        assert g.sum() == 8.0

    def test_idempotent_exactly(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.uniform(-1, 1, (2, 5, 5)))
        mask = (rng.uniform(size=(5, 5)) > 0.5).astype(np.uint8)
        once = T.mul_mask(x, mask).data
        twice = T.mul_mask(T.mul_mask(x, mask), mask).data
        np.testing.assert_array_equal(once, twice)

    def test_non_binary_mask_rejected(self):
        with pytest.raises(DomainError):
            T.mul_mask(Tensor(np.zeros((1, 2, 2))), np.full((2, 2), 0.5))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            T.mul_mask(Tensor(np.zeros((1, 2, 2))), np.ones((3, 3)))


class TestReductionsAndArithmetic:
    def test_reduce_sum_ones(self):
        assert T.reduce_sum(Tensor(np.ones((2, 2)))).item() == 4.0

    def test_square_value_and_gradient(self):
        x = Tensor(np.array(3.0), requires_grad=True)
        with Tape() as tape:
            out = T.square(x)
            tape.backward(out)
        assert out.item() == 9.0
        assert float(x.grad) == 6.0

    def test_abs_value_and_gradient(self):
        x = Tensor(np.array(-2.0), requires_grad=True)
        with Tape() as tape:
            out = T.abs_(x)
            tape.backward(out)
        assert out.item() == 2.0
        assert float(x.grad) == -1.0

    def test_div_by_zero_rejected(self):
        with pytest.raises(NumericError):
            T.div(Tensor(np.ones(3)), Tensor(np.array([1.0, 0.0, 2.0])))

    def test_scalar_operand_broadcast(self):
        x = Tensor(np.full((2, 2), 3.0), requires_grad=True)
        with Tape() as tape:
            out = T.reduce_sum(T.sub(1.0, x))
            tape.backward(out)
        assert out.item() == -8.0
        np.testing.assert_array_equal(x.grad, np.full((2, 2), -1.0, np.float32))

    def test_reduce_mean(self):
        assert T.reduce_mean(Tensor(np.array([1.0, 2.0, 3.0, 6.0]))).item() == 3.0


class TestTape:
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            out = T.relu(x)
            with pytest.raises(DomainError):
                tape.backward(out)

    def test_backward_bitwise_deterministic(self):
        rng = np.random.default_rng(7)
        data = rng.uniform(-1, 1, (2, 8, 8))
        w = rng.uniform(-1, 1, (2, 2, 3, 3))

        def run():
            x = Tensor(data, requires_grad=True)
            kw = Tensor(w, requires_grad=True)
            b = Tensor(np.zeros(2, dtype=np.float64), requires_grad=True)
            with Tape() as tape:
                out = T.reduce_sum(T.relu(T.conv2d(T.maxpool2(x), kw, b)))
                tape.backward(out)
            return x.grad.copy(), kw.grad.copy(), b.grad.copy()

        first = run()
        second = run()
        for a, c in zip(first, second):
            np.testing.assert_array_equal(a, c)

    def test_no_recording_without_tape(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        out = T.reduce_sum(x)  # no active tape: plain forward
        assert out.item() == 4.0
        assert x.grad is None

    def test_finite_outputs_on_finite_inputs(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.uniform(-2, 2, (2, 8, 8)))
        w = Tensor(rng.uniform(-2, 2, (2, 2, 3, 3)))
        b = Tensor(rng.uniform(-2, 2, 2))
        out = T.softmax_channels(T.conv2d(T.relu(x), w, b))
        assert np.isfinite(out.data).all()


class TestPrecision:
    def test_modes(self):
        assert T.Precision.SINGLE.dtype == np.float32
        assert T.Precision.DOUBLE.dtype == np.float64

    def test_mixed_precision_rejected(self):
        a = Tensor(np.ones(2), dtype=np.float32)
        b = Tensor(np.ones(2), dtype=np.float64)
        with pytest.raises(ShapeError):
            T.add(a, b)
