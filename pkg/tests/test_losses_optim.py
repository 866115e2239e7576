"""
Tests for softmax cross-entropy and the Adam update.
"""
import math

import numpy as np
import pytest

from src.engine.layers import DenseLayer
from src.engine.losses import softmax, softmax_cross_entropy
from src.engine.optim import AdamOptimizer, AdamState, adam_step
from src.utils.errors import DimensionError, LabelError, OptimizerError
from src.utils.gradcheck import check_gradients


# =============================================================================
# Softmax cross-entropy
# =============================================================================

class TestSoftmaxCrossEntropy:

    def test_uniform_logits(self):
        loss, _ = softmax_cross_entropy(np.zeros((1, 3)), [0])
        assert loss == pytest.approx(math.log(3), abs=1e-12)

    def test_large_logits_stay_finite(self):
        loss, grad = softmax_cross_entropy([[1000.0, 0.0]], [0])
        assert math.isfinite(loss)
        assert loss == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.isfinite(grad))

    def test_rows_sum_to_one(self, rng):
        probs = softmax(rng.standard_normal((20, 5)) * 30)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_loss_is_non_negative(self, rng):
        for _ in range(20):
            logits = rng.standard_normal((8, 4)) * 5
            loss, _ = softmax_cross_entropy(logits, rng.integers(0, 4, 8))
            assert loss >= 0.0

    def test_gradient_matches_finite_differences(self, rng):
        logits = rng.standard_normal((6, 4))
        labels = rng.integers(0, 4, 6)
        _, grad = softmax_cross_entropy(logits, labels)
        errors = check_gradients(lambda: softmax_cross_entropy(logits, labels)[0],
                                 {"logits": logits}, {"logits": grad})
        assert errors["logits"] < 1e-6

    def test_label_out_of_range(self):
        with pytest.raises(LabelError):
            softmax_cross_entropy(np.zeros((2, 2)), [0, 2])

    def test_label_count_mismatch(self):
        with pytest.raises(DimensionError):
            softmax_cross_entropy(np.zeros((2, 2)), [0])


# =============================================================================
# Adam
# =============================================================================

class TestAdam:

    def test_zero_gradient_first_step_leaves_params_untouched(self, rng):
        p = rng.standard_normal((3, 2))
        before = p.copy()
        state = AdamState.for_params([p])
        adam_step([p], [np.zeros_like(p)], state)
        np.testing.assert_array_equal(p, before)
        assert state.step_count == 1

    def test_first_step_moves_by_learning_rate(self):
        p = np.array([1.0, -2.0, 3.0])
        g = np.array([0.5, -4.0, 1e-3])
        state = AdamState.for_params([p], lr=0.01)
        before = p.copy()
        adam_step([p], [g], state)
        expected = before - 0.01 * g / (np.abs(g) + state.epsilon)
        np.testing.assert_allclose(p, expected, rtol=1e-12)

    def test_three_steps_on_quadratic_match_hand_unrolled_updates(self):
        lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
        w = np.array([1.0])
        state = AdamState.for_params([w], lr=lr, beta1=b1, beta2=b2, epsilon=eps)

        w_ref, m, v = 1.0, 0.0, 0.0
        for t in (1, 2, 3):
            g = 2.0 * w_ref
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            w_ref -= lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)

            adam_step([w], [2.0 * w.copy()], state)
            assert w[0] == pytest.approx(w_ref, abs=1e-15)

    def test_moments_and_step_count(self, rng):
        p = rng.standard_normal(4)
        state = AdamState.for_params([p])
        for t in range(1, 6):
            adam_step([p], [rng.standard_normal(4)], state)
            assert state.step_count == t
            assert np.all(state.second_moment[0] >= 0)

    def test_non_finite_gradient_raises_without_counting(self):
        p = np.zeros(2)
        state = AdamState.for_params([p])
        with pytest.raises(OptimizerError):
            adam_step([p], [np.array([np.nan, 0.0])], state)
        assert state.step_count == 0

    def test_shape_mismatch(self):
        p = np.zeros(2)
        state = AdamState.for_params([p])
        with pytest.raises(DimensionError):
            adam_step([p], [np.zeros(3)], state)

    def test_optimizer_ascend_flips_direction(self, rng):
        up, down = DenseLayer(2, 1, rng), DenseLayer(2, 1, rng)
        for layer in (up, down):
            layer.params["weights"] = np.zeros((1, 2))
            layer.grads["weights"] = np.array([[1.0, -1.0]])
            layer.grads["bias"] = np.array([0.5])
        AdamOptimizer([up], lr=0.01).step(ascend=True)
        AdamOptimizer([down], lr=0.01).step()
        assert up.params["weights"][0, 0] > 0 > down.params["weights"][0, 0]
        np.testing.assert_allclose(up.params["weights"], -down.params["weights"])
