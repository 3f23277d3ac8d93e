import numpy as np
import pytest

from glarekit.errors import ConfigurationError
from glarekit.nn import (
    AdamState,
    Tensor,
    adam_step,
    concat_channels,
    conv1x1,
    conv1x1_backward,
    conv2d,
    conv2d_backward,
    finite_diff_check,
    maxpool2,
    maxpool2_backward,
    relu,
    relu_backward,
    sgd_step,
    softmax2,
    split_channels,
    upconv2,
    upconv2_backward,
    weighted_cross_entropy,
)


class TestConv2d:
    def test_identity_kernel_preserves_input(self, rng):
        x = rng.uniform(-1, 1, (1, 3, 3, 1))
        w = np.zeros((1, 1, 3, 3))
        w[0, 0, 1, 1] = 1.0
        np.testing.assert_allclose(conv2d(x, w, np.zeros(1)), x, atol=1e-12)

    def test_padded_sum_counts(self):
        x = np.ones((1, 5, 5, 1))
        w = np.ones((1, 1, 3, 3))
        y = conv2d(x, w, np.zeros(1))[0, :, :, 0]
        assert y[2, 2] == 9.0
        assert y[0, 0] == 4.0
        assert y[0, 2] == 6.0

    def test_linear_in_input_with_zero_bias(self, rng):
        w = rng.uniform(-1, 1, (4, 3, 3, 3))
        b = np.zeros(4)
        x1 = rng.uniform(-1, 1, (2, 6, 6, 3))
        x2 = rng.uniform(-1, 1, (2, 6, 6, 3))
        a, c = 2.5, -1.25
        lhs = conv2d(a * x1 + c * x2, w, b)
        rhs = a * conv2d(x1, w, b) + c * conv2d(x2, w, b)
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)

    def test_gradients_match_finite_differences(self, rng):
        x = rng.uniform(-1, 1, (2, 5, 6, 3))
        w = rng.uniform(-1, 1, (4, 3, 3, 3))
        b = rng.uniform(-1, 1, 4)
        proj = rng.uniform(-1, 1, (2, 5, 6, 4))

        def fn(xa, wa, ba):
            return float((conv2d(xa, wa, ba) * proj).sum())

        dx, dw, db = conv2d_backward(proj, x, w)
        assert finite_diff_check(fn, [x, w, b], [dx, dw, db]) < 1e-4

    def test_corrupted_gradient_is_detected(self, rng):
        x = rng.uniform(-1, 1, (1, 4, 4, 2))
        w = rng.uniform(-1, 1, (3, 2, 3, 3))
        b = rng.uniform(-1, 1, 3)
        proj = rng.uniform(-1, 1, (1, 4, 4, 3))

        def fn(xa, wa, ba):
            return float((conv2d(xa, wa, ba) * proj).sum())

        dx, dw, db = conv2d_backward(proj, x, w)
        dw_bad = dw.copy()
        dw_bad[0, 0, 0, 0] = dw_bad[0, 0, 0, 0] * 1.1 + 0.1
        assert finite_diff_check(fn, [x, w, b], [dx, dw_bad, db]) > 1e-2

    def test_channel_mismatch_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            conv2d(rng.uniform(size=(1, 4, 4, 3)), np.zeros((2, 5, 3, 3)), np.zeros(2))

    def test_deterministic(self, rng):
        x = rng.uniform(-1, 1, (2, 8, 8, 4)).astype(np.float32)
        w = rng.uniform(-1, 1, (8, 4, 3, 3)).astype(np.float32)
        b = rng.uniform(-1, 1, 8).astype(np.float32)
        assert np.array_equal(conv2d(x, w, b), conv2d(x, w, b))


class TestConv1x1:
    def test_gradients_match_finite_differences(self, rng):
        x = rng.uniform(-1, 1, (2, 4, 5, 3))
        w = rng.uniform(-1, 1, (2, 3, 1, 1))
        b = rng.uniform(-1, 1, 2)
        proj = rng.uniform(-1, 1, (2, 4, 5, 2))

        def fn(xa, wa, ba):
            return float((conv1x1(xa, wa, ba) * proj).sum())

        dx, dw, db = conv1x1_backward(proj, x, w)
        assert finite_diff_check(fn, [x, w, b], [dx, dw, db]) < 1e-4


class TestRelu:
    def test_elementwise_examples(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])

    def test_all_negative_blocks_gradient(self, rng):
        x = -rng.uniform(0.5, 1.5, (2, 4, 4, 3))
        assert np.all(relu(x) == 0)
        assert np.all(relu_backward(np.ones_like(x), x) == 0)

    def test_gradient_matches_finite_differences_away_from_kink(self, rng):
        x = rng.uniform(-1, 1, (3, 4, 4, 2))
        proj = rng.uniform(-1, 1, x.shape)

        def fn(xa):
            return float((relu(xa) * proj).sum())

        dx = relu_backward(proj, x)
        exclude = [np.abs(x) < 1e-3]
        assert finite_diff_check(fn, [x], [dx], exclude=exclude) < 1e-4


class TestMaxpool2:
    def test_two_by_two(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]]).reshape(1, 2, 2, 1)
        y, _ = maxpool2(x)
        assert y[0, 0, 0, 0] == 4.0

    def test_tie_routes_to_first_row_major(self):
        x = np.ones((1, 2, 2, 1))
        y, idx = maxpool2(x)
        assert y[0, 0, 0, 0] == 1.0
        assert idx[0, 0, 0, 0] == 0
        dx = maxpool2_backward(np.full((1, 1, 1, 1), 5.0), idx, x.shape)
        np.testing.assert_array_equal(dx[0, :, :, 0], [[5.0, 0.0], [0.0, 0.0]])

    def test_output_bounded_by_input(self, rng):
        x = rng.normal(0, 2, (2, 6, 8, 3))
        y, _ = maxpool2(x)
        assert y.max() <= x.max() and y.min() >= x.min()

    def test_odd_dims_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            maxpool2(rng.uniform(size=(1, 3, 4, 1)))

    def test_gradient_matches_finite_differences(self, rng):
        # distinct spaced values keep every window far from a tie
        x = (rng.permutation(2 * 6 * 4 * 2).astype(np.float64) * 0.1).reshape(2, 6, 4, 2)
        proj = rng.uniform(-1, 1, (2, 3, 2, 2))

        def fn(xa):
            y, _ = maxpool2(xa)
            return float((y * proj).sum())

        _, idx = maxpool2(x)
        dx = maxpool2_backward(proj, idx, x.shape)
        assert finite_diff_check(fn, [x], [dx]) < 1e-4


class TestUpconv2:
    def test_single_value_broadcast(self):
        x = np.full((1, 1, 1, 1), 3.0)
        w = np.ones((1, 1, 2, 2))
        y = upconv2(x, w, np.zeros(1))
        np.testing.assert_array_equal(y[0, :, :, 0], np.full((2, 2), 3.0))

    def test_doubles_spatial_dims(self, rng):
        x = rng.uniform(size=(2, 5, 7, 3))
        y = upconv2(x, rng.uniform(size=(3, 4, 2, 2)), np.zeros(4))
        assert y.shape == (2, 10, 14, 4)

    def test_gradients_match_finite_differences(self, rng):
        x = rng.uniform(-1, 1, (2, 3, 4, 3))
        w = rng.uniform(-1, 1, (3, 2, 2, 2))
        b = rng.uniform(-1, 1, 2)
        proj = rng.uniform(-1, 1, (2, 6, 8, 2))

        def fn(xa, wa, ba):
            return float((upconv2(xa, wa, ba) * proj).sum())

        dx, dw, db = upconv2_backward(proj, x, w)
        assert finite_diff_check(fn, [x, w, b], [dx, dw, db]) < 1e-4


class TestConcat:
    def test_channel_arithmetic(self, rng):
        a = rng.uniform(size=(2, 4, 4, 4))
        b = rng.uniform(size=(2, 4, 4, 6))
        y = concat_channels([a, b])
        assert y.shape == (2, 4, 4, 10)

    def test_single_input_identity(self, rng):
        a = rng.uniform(size=(1, 3, 3, 2))
        np.testing.assert_array_equal(concat_channels([a]), a)

    def test_split_round_trip(self, rng):
        a = rng.uniform(size=(2, 4, 4, 3))
        b = rng.uniform(size=(2, 4, 4, 5))
        parts = split_channels(concat_channels([a, b]), [3, 5])
        np.testing.assert_array_equal(parts[0], a)
        np.testing.assert_array_equal(parts[1], b)

    def test_geometry_mismatch_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            concat_channels([rng.uniform(size=(1, 4, 4, 1)), rng.uniform(size=(1, 5, 4, 1))])


class TestWeightedCrossEntropy:
    def test_perfect_prediction_limit(self, rng):
        labels = rng.integers(0, 2, (1, 4, 4))
        logits = np.zeros((1, 4, 4, 2))
        np.put_along_axis(logits, labels[..., None], 25.0, axis=-1)
        loss, _ = weighted_cross_entropy(logits, labels, np.ones((1, 4, 4)))
        assert loss == pytest.approx(0.0, abs=1e-9)

    def test_equal_logits_give_log_two(self, rng):
        labels = rng.integers(0, 2, (2, 3, 3))
        loss, _ = weighted_cross_entropy(
            np.zeros((2, 3, 3, 2)), labels, np.ones((2, 3, 3))
        )
        assert loss == pytest.approx(np.log(2.0), rel=1e-12)

    def test_loss_nonnegative(self, rng):
        logits = rng.normal(size=(2, 4, 4, 2))
        labels = rng.integers(0, 2, (2, 4, 4))
        weights = rng.uniform(0.1, 3, (2, 4, 4))
        loss, _ = weighted_cross_entropy(logits, labels, weights)
        assert loss > 0.0

    def test_softmax_rows_sum_to_one(self, rng):
        p = softmax2(rng.normal(0, 4, (2, 5, 5, 2)))
        np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        logits = rng.normal(size=(1, 4, 4, 2))
        labels = rng.integers(0, 2, (1, 4, 4))
        weights = rng.uniform(0.2, 2.0, (1, 4, 4))

        def fn(la):
            return weighted_cross_entropy(la, labels, weights)[0]

        _, dlogits = weighted_cross_entropy(logits, labels, weights)
        assert finite_diff_check(fn, [logits], [dlogits]) < 1e-4

    def test_doubling_weights_doubles_gradients_exactly(self, rng):
        logits = rng.normal(size=(1, 4, 4, 2))
        labels = rng.integers(0, 2, (1, 4, 4))
        weights = rng.uniform(0.2, 2.0, (1, 4, 4))
        _, g1 = weighted_cross_entropy(logits, labels, weights)
        _, g2 = weighted_cross_entropy(logits, labels, 2.0 * weights)
        np.testing.assert_array_equal(g2, 2.0 * g1)

    def test_shape_mismatch_rejected(self, rng):
        with pytest.raises(ConfigurationError):
            weighted_cross_entropy(
                rng.normal(size=(1, 4, 4, 3)),
                rng.integers(0, 2, (1, 4, 4)),
                np.ones((1, 4, 4)),
            )


class TestOptimizers:
    def test_sgd_update_rule(self):
        p = Tensor(np.array([1.0]), np.array([0.5]))
        sgd_step([p], lr=0.1)
        assert p.data[0] == pytest.approx(0.95)

    def test_zero_gradient_is_a_fixed_point(self):
        for make_step in ("sgd", "adam"):
            p = Tensor(np.array([1.0, -2.0]), np.zeros(2))
            if make_step == "sgd":
                sgd_step([p], lr=0.5)
            else:
                state = AdamState.for_params([p])
                adam_step([p], state, lr=0.5)
            np.testing.assert_array_equal(p.data, [1.0, -2.0])

    def test_sgd_quadratic_bowl_geometric_decay(self):
        # f(w) = w**2, lr 0.1: w_k = 0.8**k, so |w_50| = 0.8**50 ~ 1.43e-5
        p = Tensor(np.array([1.0]))
        for _ in range(50):
            p.grad = 2.0 * p.data
            sgd_step([p], lr=0.1)
        assert abs(p.data[0]) < 1e-4
        assert p.data[0] == pytest.approx(0.8**50, rel=1e-9)

    def test_adam_moves_toward_minimum(self):
        p = Tensor(np.array([1.0]))
        state = AdamState.for_params([p])
        for _ in range(400):
            p.grad = 2.0 * p.data
            adam_step([p], state, lr=0.05)
        assert abs(p.data[0]) < 1e-3


class TestFiniteDiffCheck:
    def test_linear_op_is_exact_to_machine_precision(self, rng):
        x = rng.uniform(-1, 1, (3, 3))
        proj = rng.uniform(-1, 1, (3, 3))

        def fn(xa):
            return float((3.0 * xa * proj).sum())

        assert finite_diff_check(fn, [x], [3.0 * proj]) < 1e-9
