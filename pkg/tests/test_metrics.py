"""
Tests for accuracy, micro F1 and macro F1, checked against scikit-learn.
"""
import numpy as np
import pytest
from sklearn.metrics import accuracy_score, f1_score

from src.utils.errors import EvaluationError
from src.utils.metrics import confusion_matrix, metrics


class TestMetrics:

    def test_perfect(self):
        scores = metrics([0, 1, 1], [0, 1, 1], 2)
        assert (scores.accuracy, scores.micro_f1, scores.macro_f1) == (1.0, 1.0, 1.0)

    def test_all_wrong(self):
        scores = metrics([0, 0], [1, 1], 2)
        assert scores.accuracy == 0.0
        assert scores.macro_f1 == 0.0

    def test_mixed_example(self):
        scores = metrics([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert scores.accuracy == pytest.approx(0.75)
        assert scores.macro_f1 == pytest.approx((2 / 3 + 0.8) / 2)

    def test_absent_class_scores_zero(self):
        # class 2 never occurs and is never predicted
        scores = metrics([0, 1], [0, 1], 3)
        assert scores.macro_f1 == pytest.approx(2 / 3)

    def test_confusion_matrix(self):
        counts = confusion_matrix([0, 0, 1, 2], [0, 1, 1, 2], 3)
        np.testing.assert_array_equal(counts, [[1, 1, 0], [0, 1, 0], [0, 0, 1]])

    @pytest.mark.parametrize("y_true, y_pred", [([], []), ([0, 1], [0]), ([0, 3], [0, 1])])
    def test_invalid_inputs(self, y_true, y_pred):
        with pytest.raises(EvaluationError):
            metrics(y_true, y_pred, 2)

    def test_matches_sklearn(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            n_classes = int(rng.integers(2, 5))
            size = int(rng.integers(1, 40))
            y_true, y_pred = rng.integers(0, n_classes, size), rng.integers(0, n_classes, size)
            scores = metrics(y_true, y_pred, n_classes)
            labels = list(range(n_classes))
            assert scores.accuracy == pytest.approx(accuracy_score(y_true, y_pred))
            assert scores.micro_f1 == pytest.approx(
                f1_score(y_true, y_pred, labels=labels, average="micro", zero_division=0))
            assert scores.macro_f1 == pytest.approx(
                f1_score(y_true, y_pred, labels=labels, average="macro", zero_division=0))

    def test_micro_f1_equals_accuracy_for_single_label(self):
        rng = np.random.default_rng(1)
        for _ in range(1000):
            y_true, y_pred = rng.integers(0, 3, 25), rng.integers(0, 3, 25)
            scores = metrics(y_true, y_pred, 3)
            assert scores.micro_f1 == pytest.approx(scores.accuracy, abs=1e-12)

    def test_macro_f1_ignores_class_relabelling(self):
        rng = np.random.default_rng(2)
        y_true, y_pred = rng.integers(0, 4, 50), rng.integers(0, 4, 50)
        perm = np.array([2, 0, 3, 1])
        assert metrics(perm[y_true], perm[y_pred], 4).macro_f1 == pytest.approx(
            metrics(y_true, y_pred, 4).macro_f1, abs=1e-12)
