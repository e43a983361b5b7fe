"""In-sample classification quality and predictor importance.

Two posterior summaries of the class probabilities are kept apart on
purpose. Hard predictions use the argmax of the posterior-mean logits;
scores and triage use the posterior-predictive probabilities, i.e. the
softmax evaluated per draw and then averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import hdi
from .errors import ValidationError
from .model import softmax


def _design(draws, X) -> np.ndarray:
    names = getattr(X, "column_names", None)
    if names is not None and tuple(names) != tuple(draws.column_names):
        raise ValidationError(
            f"feature columns {list(names)} do not match the fit's {list(draws.column_names)}"
        )
    Xa = np.atleast_2d(np.asarray(getattr(X, "X", X), dtype=float))
    if Xa.shape[1] != len(draws.column_names):
        raise ValidationError(
            f"expected {len(draws.column_names)} feature columns {list(draws.column_names)}, got {Xa.shape[1]}"
        )
    return Xa


def posterior_mean_logits(draws, X) -> np.ndarray:
    Xa = _design(draws, X)
    alpha, beta = draws.natural()
    # the logits are linear in (alpha, beta), so averaging the parameters is exact
    return alpha.mean(axis=0) + Xa @ beta.mean(axis=0).T


def predictive_probs(draws, X) -> np.ndarray:
    Xa = _design(draws, X)
    alpha, beta = draws.natural()
    return mean_class_probs(alpha, beta, Xa)


def mean_class_probs(alpha: np.ndarray, beta: np.ndarray, Xa: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Softmax class probabilities per draw, averaged over draws; (N, C)."""
    S = alpha.shape[0]
    total = np.zeros((Xa.shape[0], alpha.shape[1]))
    for start in range(0, S, chunk):
        a = alpha[start : start + chunk]
        b = beta[start : start + chunk]
        logits = a[:, None, :] + np.einsum("nj,scj->snc", Xa, b)
        total += softmax(logits).sum(axis=0)
    return total / S


def brier_score(probs, labels) -> float:
    """Multiclass Brier score, ``mean_i sum_c (p_ic - 1[y_i = c])**2``; range [0, 2]."""
    probs = np.asarray(probs, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    onehot = np.zeros_like(probs)
    onehot[np.arange(labels.size), labels - 1] = 1.0
    return float(np.mean(np.sum((probs - onehot) ** 2, axis=1)))


@dataclass
class ClassificationReport:
    confusion: np.ndarray
    accuracy: float
    brier: float
    per_specimen_probs: np.ndarray
    predicted: np.ndarray

    def to_dict(self) -> dict:
        return {
            "confusion": self.confusion.tolist(),
            "confusion_axes": "rows = true level 1..3, columns = predicted level 1..3",
            "accuracy": self.accuracy,
            "brier": self.brier,
        }


def classification_report(true_labels, predicted, probs) -> ClassificationReport:
    """Confusion matrix, accuracy and Brier score.

    ``predicted`` is a vector of levels 1-3, or an (N, 3) logit matrix whose
    row-wise argmax gives the predicted level.
    """
    y = np.asarray(true_labels, dtype=np.int64)
    pred = np.asarray(predicted)
    if pred.ndim == 2:
        pred = np.argmax(pred, axis=1) + 1
    pred = pred.astype(np.int64)
    probs = np.asarray(probs, dtype=float)
    if not (y.shape == pred.shape == probs.shape[:1]):
        raise ValidationError("true labels, predictions and probabilities must have the same length")
    confusion = np.zeros((3, 3), dtype=np.int64)
    np.add.at(confusion, (y - 1, pred - 1), 1)
    n = y.size
    accuracy = float(np.trace(confusion)) / n if n else float("nan")
    return ClassificationReport(confusion, accuracy, brier_score(probs, y) if n else float("nan"), probs, pred)


@dataclass
class PredictorImportance:
    name: str
    mean_abs_beta: float
    class_means: list[float]
    class_hdis: list[tuple[float, float]]
    retained: bool

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mean_abs_beta": self.mean_abs_beta,
            "class_means": self.class_means,
            "class_hdis": [list(h) for h in self.class_hdis],
            "retained": self.retained,
        }


def coefficient_importance(draws, mass: float = 0.95) -> list[PredictorImportance]:
    """Mean |beta| per predictor averaged over the class logits, plus per-class HDIs.

    A predictor counts as retained when the HDI of at least one class
    coefficient excludes zero.
    """
    _, beta = draws.natural()
    C, J = beta.shape[1], beta.shape[2]
    classes = range(1, C) if draws.spec.reference_class else range(C)
    out = []
    for j in range(J):
        means, hdis, retained = [], [], False
        for c in range(C):
            col = beta[:, c, j]
            means.append(float(col.mean()))
            lo, hi = hdi(col, mass) if col.size >= 2 else (float(col[0]), float(col[0]))
            hdis.append((lo, hi))
            if c in classes and (lo > 0 or hi < 0):
                retained = True
        mean_abs = float(np.mean([np.abs(beta[:, c, j]).mean() for c in classes]))
        out.append(PredictorImportance(draws.column_names[j], mean_abs, means, hdis, retained))
    return out
