from dataclasses import dataclass

import numpy as np
import pytest

from timber_reuse.errors import ValidationError
from timber_reuse.evaluation import (
    brier_score,
    classification_report,
    coefficient_importance,
    posterior_mean_logits,
    predictive_probs,
)
from timber_reuse.model import ModelSpec, class_probabilities
from timber_reuse.specimens import FeatureMatrix


@dataclass
class StubDraws:
    """Minimal stand-in exposing what the evaluation functions read."""

    alpha: np.ndarray
    beta: np.ndarray
    column_names: tuple = ("group", "orientation")
    reference_class: bool = False

    def natural(self):
        return self.alpha, self.beta

    @property
    def spec(self):
        return ModelSpec(n_features=len(self.column_names), reference_class=self.reference_class)


def zeros(S=5):
    return StubDraws(np.zeros((S, 3)), np.zeros((S, 3, 2)))


class TestLogitsAndProbs:
    def test_zero_draws(self, rng):
        X = rng.normal(size=(4, 2))
        np.testing.assert_array_equal(posterior_mean_logits(zeros(), X), 0)
        np.testing.assert_allclose(predictive_probs(zeros(), X), 1 / 3)

    def test_single_draw(self, rng):
        a, b, X = rng.normal(size=(1, 3)), rng.normal(size=(1, 3, 2)), rng.normal(size=(4, 2))
        d = StubDraws(a, b)
        np.testing.assert_allclose(posterior_mean_logits(d, X), a[0] + X @ b[0].T, atol=1e-14)
        expected = np.array([class_probabilities(a[0], b[0], x) for x in X])
        np.testing.assert_allclose(predictive_probs(d, X), expected, atol=1e-14)

    def test_opposite_draws_cancel(self, rng):
        a, b = rng.normal(size=3), rng.normal(size=(3, 2))
        d = StubDraws(np.stack([a, -a]), np.stack([b, -b]))
        np.testing.assert_allclose(posterior_mean_logits(d, rng.normal(size=(3, 2))), 0, atol=1e-14)

    def test_rows_are_simplices(self, rng):
        d = StubDraws(rng.normal(size=(700, 3)) * 3, rng.normal(size=(700, 3, 2)))
        p = predictive_probs(d, rng.normal(size=(9, 2)))
        np.testing.assert_allclose(p.sum(axis=1), 1, atol=1e-9)
        assert np.all(p > 0)

    def test_column_mismatch(self):
        fm = FeatureMatrix(np.zeros((2, 2)), ("group", "density"), np.zeros(2), np.ones(2))
        with pytest.raises(ValidationError, match="density"):
            predictive_probs(zeros(), fm)
        with pytest.raises(ValidationError):
            posterior_mean_logits(zeros(), np.zeros((2, 3)))


class TestScores:
    def test_perfect(self):
        y = np.array([1, 2, 3, 1])
        p = np.eye(3)[y - 1]
        rep = classification_report(y, y, p)
        assert rep.brier == 0 and rep.accuracy == 1.0

    def test_uniform(self):
        y = np.array([1, 3, 3, 2, 2])
        assert brier_score(np.full((5, 3), 1 / 3), y) == pytest.approx(2 / 3, abs=1e-15)

    def test_fully_wrong(self):
        y = np.array([1, 2, 3])
        wrong = np.array([2, 3, 1])
        rep = classification_report(y, wrong, np.eye(3)[wrong - 1])
        assert rep.brier == 2.0 and rep.accuracy == 0.0

    def test_confusion_rows_sum_to_true_counts(self, rng):
        y = rng.integers(1, 4, 50)
        pred = rng.integers(1, 4, 50)
        rep = classification_report(y, pred, np.full((50, 3), 1 / 3))
        np.testing.assert_array_equal(rep.confusion.sum(axis=1), np.bincount(y, minlength=4)[1:])
        assert rep.accuracy == np.trace(rep.confusion) / 50

    def test_logit_matrix_input(self, rng):
        logits = rng.normal(size=(10, 3))
        rep = classification_report(np.ones(10, int), logits, np.full((10, 3), 1 / 3))
        np.testing.assert_array_equal(rep.predicted, logits.argmax(axis=1) + 1)
        shifted = classification_report(np.ones(10, int), logits + 5.0, np.full((10, 3), 1 / 3))
        np.testing.assert_array_equal(shifted.predicted, rep.predicted)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            classification_report([1, 2], [1], np.full((2, 3), 1 / 3))


class TestImportance:
    def test_zero_draws(self):
        imp = coefficient_importance(zeros(10))
        assert all(i.mean_abs_beta == 0 and not i.retained for i in imp)

    def test_centered_effect_retained(self, rng):
        S = 4000
        beta = np.zeros((S, 3, 2))
        beta[:, 2, 1] = rng.normal(0.71, 0.3, S)
        beta[:, :, 0] = rng.normal(0, 2.0, (S, 3))
        imp = coefficient_importance(StubDraws(np.zeros((S, 3)), beta))
        assert imp[1].retained and imp[1].class_means[2] == pytest.approx(0.71, abs=0.03)
        assert not imp[0].retained

    def test_mean_abs_averaged_over_classes(self):
        beta = np.zeros((2, 3, 2))
        beta[:, 0, 0] = [0.3, -0.3]
        beta[:, 1, 0] = 0.6
        imp = coefficient_importance(StubDraws(np.zeros((2, 3)), beta))
        assert imp[0].mean_abs_beta == pytest.approx(0.3)

    def test_reference_class_ignores_pinned_row(self):
        beta = np.zeros((2, 3, 2))
        beta[:, 1, 0] = 0.6
        imp = coefficient_importance(StubDraws(np.zeros((2, 3)), beta, reference_class=True))
        assert imp[0].mean_abs_beta == pytest.approx(0.3)
