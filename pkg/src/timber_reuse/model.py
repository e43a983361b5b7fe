"""Multinomial-logit likelihood with a non-centred horseshoe prior.

Class probabilities for specimen ``i`` are the softmax of the logits
``alpha_c + x_i . beta_c``. Coefficients are written as
``beta[c, j] = z[c, j] * tau_hs * lambda[j]`` with ``z ~ N(0, 1)``,
``lambda_j ~ HalfCauchy(1)`` and ``tau_hs ~ HalfCauchy(global_scale)``.
Both scales are sampled on the log scale, so the density carries the
log-Jacobian of ``exp``.

The flat unconstrained vector is laid out as::

    [alpha (C) | z (C*J, row-major) | log lambda (J) | log tau_hs (1)]

The lower level threshold ``tau2`` never enters this density directly: it
only determines which level each specimen is labelled with.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ValidationError
from .grading import TAU1_DEFAULT, TAU2_BOUNDS_DEFAULT, assign_levels

N_CLASSES = 3
_LOG_2PI = math.log(2.0 * math.pi)
_LOG_2_OVER_PI = math.log(2.0 / math.pi)


@dataclass(frozen=True)
class ModelSpec:
    n_features: int
    n_classes: int = N_CLASSES
    intercept_scale: float = 5.0
    global_scale: float = 1.0
    local_scale: float = 1.0
    tau1: float = TAU1_DEFAULT
    tau2_bounds: tuple[float, float] = TAU2_BOUNDS_DEFAULT
    reference_class: bool = False

    def __post_init__(self):
        if self.n_classes != N_CLASSES:
            raise ValidationError("the model is defined for exactly 3 reuse levels")
        if self.n_features < 1:
            raise ValidationError("at least one predictor is required")
        if min(self.intercept_scale, self.global_scale, self.local_scale) <= 0:
            raise ValidationError("prior scales must be positive")
        lo, hi = self.tau2_bounds
        if not (0 < lo < hi < self.tau1):
            raise ValidationError(f"tau2 bounds {self.tau2_bounds} must lie inside (0, tau1={self.tau1})")

    @property
    def dim(self) -> int:
        C, J = self.n_classes, self.n_features
        return C + C * J + J + 1

    def to_dict(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "intercept_scale": self.intercept_scale,
            "global_scale": self.global_scale,
            "local_scale": self.local_scale,
            "tau1": self.tau1,
            "tau2_bounds": list(self.tau2_bounds),
            "reference_class": self.reference_class,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        d = dict(d)
        d["tau2_bounds"] = tuple(d["tau2_bounds"])
        return cls(**d)

    def parameter_names(self) -> list[str]:
        """Names of the unconstrained coordinates, in vector order."""
        C, J = self.n_classes, self.n_features
        names = [f"alpha[{c + 1}]" for c in range(C)]
        names += [f"z[{c + 1},{j + 1}]" for c in range(C) for j in range(J)]
        names += [f"log_lambda[{j + 1}]" for j in range(J)]
        names.append("log_tau_hs")
        return names


@dataclass
class ParameterVector:
    alpha: np.ndarray
    z: np.ndarray
    eta_lambda: np.ndarray
    eta_tau: float

    @classmethod
    def unpack(cls, theta: np.ndarray, spec: ModelSpec) -> "ParameterVector":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (spec.dim,):
            raise ValidationError(f"parameter vector must have length {spec.dim}, got {theta.shape}")
        C, J = spec.n_classes, spec.n_features
        return cls(
            alpha=theta[:C].copy(),
            z=theta[C : C + C * J].reshape(C, J).copy(),
            eta_lambda=theta[C + C * J : C + C * J + J].copy(),
            eta_tau=float(theta[-1]),
        )

    def pack(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.z.ravel(), self.eta_lambda, [self.eta_tau]])

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ParameterVector":
        return cls.unpack(np.zeros(spec.dim), spec)


@dataclass(frozen=True)
class LogDensityResult:
    logp: float
    grad: np.ndarray


def class_probabilities(alpha, beta, x) -> np.ndarray:
    """Softmax of ``alpha + beta @ x`` for one predictor vector."""
    logits = np.asarray(alpha, dtype=float) + np.asarray(beta, dtype=float) @ np.asarray(x, dtype=float)
    return softmax(logits)


def softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=float)
    m = logits.max(axis=-1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def reconstruct_beta(params: ParameterVector) -> np.ndarray:
    return params.z * math.exp(params.eta_tau) * np.exp(params.eta_lambda)[None, :]


def natural_parameters(theta: np.ndarray, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """``(alpha, beta)`` as used by the likelihood for a flat vector or a stack of them.

    In reference-class mode the first class's intercept and coefficients are
    pinned to zero.
    """
    theta = np.asarray(theta, dtype=float)
    C, J = spec.n_classes, spec.n_features
    alpha = theta[..., :C].copy()
    z = theta[..., C : C + C * J].reshape(theta.shape[:-1] + (C, J))
    lam = np.exp(theta[..., C + C * J : C + C * J + J])
    tau = np.exp(theta[..., -1])
    beta = z * tau[..., None, None] * lam[..., None, :]
    if spec.reference_class:
        alpha[..., 0] = 0.0
        beta[..., 0, :] = 0.0
    return alpha, beta


def _one_hot(labels: np.ndarray, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 1 or labels.max() > n_classes):
        raise ValidationError("labels must be reuse levels 1..3")
    Y = np.zeros((labels.size, n_classes))
    Y[np.arange(labels.size), labels.astype(int) - 1] = 1.0
    return Y


class LogPosterior:
    """Log posterior of the continuous block for fixed labels.

    Holds the design matrix and a one-hot label cache so repeated calls
    allocate little. ``set_labels`` swaps the labels after a threshold move.
    """

    def __init__(self, X: np.ndarray, labels: np.ndarray, spec: ModelSpec):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != spec.n_features:
            raise ValidationError(f"X must be N x {spec.n_features}, got shape {X.shape}")
        self.X = X
        self.spec = spec
        self.set_labels(labels)
        C, J = spec.n_classes, spec.n_features
        self._sl_alpha = slice(0, C)
        self._sl_z = slice(C, C + C * J)
        self._sl_lam = slice(C + C * J, C + C * J + J)

    def set_labels(self, labels: np.ndarray) -> None:
        labels = np.asarray(labels)
        if labels.shape != (self.X.shape[0],):
            raise ValidationError(f"need {self.X.shape[0]} labels, got shape {labels.shape}")
        self.labels = labels.astype(np.int64)
        self.Y = _one_hot(self.labels, self.spec.n_classes)
        self._label_idx = self.labels - 1

    def __call__(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        spec = self.spec
        return _logp_grad_kernel(
            theta, self.X, self._label_idx, spec.n_classes, spec.n_features,
            spec.intercept_scale, spec.global_scale, spec.reference_class,
        )

    def reference(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Vectorized numpy evaluation; slower, kept as a cross-check of the kernel."""
        spec = self.spec
        C, J = spec.n_classes, spec.n_features
        alpha = theta[self._sl_alpha]
        z = theta[self._sl_z].reshape(C, J)
        eta_lam = theta[self._sl_lam]
        eta_tau = theta[-1]
        lam = np.exp(eta_lam)
        tau = math.exp(eta_tau)
        scale = tau * lam
        beta = z * scale
        if spec.reference_class:
            alpha = alpha.copy()
            alpha[0] = 0.0
            beta = beta.copy()
            beta[0] = 0.0

        logits = alpha + self.X @ beta.T
        m = logits.max(axis=1, keepdims=True)
        e = np.exp(logits - m)
        s = e.sum(axis=1, keepdims=True)
        loglik = float(np.sum(self.Y * logits) - np.sum(m) - np.sum(np.log(s)))
        resid = self.Y - e / s

        d_alpha = resid.sum(axis=0)
        d_beta = resid.T @ self.X
        if spec.reference_class:
            d_alpha[0] = 0.0
            d_beta[0] = 0.0

        s_a = spec.intercept_scale
        g = spec.global_scale
        lam2 = lam * lam
        tg2 = (tau / g) ** 2
        logprior = (
            -0.5 * float(np.dot(theta[self._sl_alpha], theta[self._sl_alpha])) / (s_a * s_a)
            - C * (math.log(s_a) + 0.5 * _LOG_2PI)
            - 0.5 * float(np.dot(theta[self._sl_z], theta[self._sl_z]))
            - 0.5 * C * J * _LOG_2PI
            + J * _LOG_2_OVER_PI
            - float(np.sum(np.log1p(lam2)))
            + float(np.sum(eta_lam))
            + _LOG_2_OVER_PI
            - math.log(g)
            - math.log1p(tg2)
            + eta_tau
        )

        grad = np.empty_like(theta)
        grad[self._sl_alpha] = d_alpha - theta[self._sl_alpha] / (s_a * s_a)
        grad[self._sl_z] = (d_beta * scale).ravel() - theta[self._sl_z]
        db_b = d_beta * beta
        grad[self._sl_lam] = db_b.sum(axis=0) - 2.0 * lam2 / (1.0 + lam2) + 1.0
        grad[-1] = db_b.sum() - 2.0 * tg2 / (1.0 + tg2) + 1.0
        return loglik + logprior, grad


@numba.njit(cache=True)
def _logp_grad_kernel(theta, X, label_idx, C, J, s_a, g, ref):
    N = X.shape[0]
    off_z = C
    off_lam = C + C * J
    tau = math.exp(theta[C + C * J + J])
    lam = np.empty(J)
    for j in range(J):
        lam[j] = math.exp(theta[off_lam + j])
    alpha = np.empty(C)
    beta = np.empty((C, J))
    for c in range(C):
        alpha[c] = theta[c]
        for j in range(J):
            beta[c, j] = theta[off_z + c * J + j] * tau * lam[j]
    if ref:
        alpha[0] = 0.0
        for j in range(J):
            beta[0, j] = 0.0

    loglik = 0.0
    d_alpha = np.zeros(C)
    d_beta = np.zeros((C, J))
    logits = np.empty(C)
    for i in range(N):
        m = -np.inf
        for c in range(C):
            v = alpha[c]
            for j in range(J):
                v += X[i, j] * beta[c, j]
            logits[c] = v
            if v > m:
                m = v
        s = 0.0
        for c in range(C):
            logits[c] = math.exp(logits[c] - m)
            s += logits[c]
        y = label_idx[i]
        # logits[] now holds exp(l - m); log p_y = l_y - m - log s
        loglik += math.log(logits[y] / s)
        for c in range(C):
            r = -logits[c] / s
            if c == y:
                r += 1.0
            d_alpha[c] += r
            for j in range(J):
                d_beta[c, j] += r * X[i, j]
    if ref:
        d_alpha[0] = 0.0
        for j in range(J):
            d_beta[0, j] = 0.0

    grad = np.empty(theta.shape[0])
    logp = loglik
    inv_sa2 = 1.0 / (s_a * s_a)
    for c in range(C):
        a = theta[c]
        logp -= 0.5 * a * a * inv_sa2
        grad[c] = d_alpha[c] - a * inv_sa2
    logp -= C * (math.log(s_a) + 0.5 * _LOG_2PI)
    d_tau = 0.0
    for j in range(J):
        d_lam = 0.0
        for c in range(C):
            zc = theta[off_z + c * J + j]
            logp -= 0.5 * zc * zc
            grad[off_z + c * J + j] = d_beta[c, j] * tau * lam[j] - zc
            d_lam += d_beta[c, j] * beta[c, j]
        lam2 = lam[j] * lam[j]
        logp += _LOG_2_OVER_PI - math.log1p(lam2) + theta[off_lam + j]
        grad[off_lam + j] = d_lam - 2.0 * lam2 / (1.0 + lam2) + 1.0
        d_tau += d_lam
    logp -= 0.5 * C * J * _LOG_2PI
    tg2 = (tau / g) * (tau / g)
    logp += _LOG_2_OVER_PI - math.log(g) - math.log1p(tg2) + theta[C + C * J + J]
    grad[C + C * J + J] = d_tau - 2.0 * tg2 / (1.0 + tg2) + 1.0
    return logp, grad


def log_likelihood(theta: np.ndarray, labels: np.ndarray, X: np.ndarray, spec: ModelSpec) -> float:
    """Categorical log likelihood term alone (no priors)."""
    alpha, beta = natural_parameters(theta, spec)
    logp = log_softmax(alpha + np.asarray(X, dtype=float) @ beta.T)
    labels = np.asarray(labels, dtype=np.int64)
    return float(logp[np.arange(labels.size), labels - 1].sum())


def logp_and_grad(params, labels, X, spec: ModelSpec) -> LogDensityResult:
    """Log posterior density and its gradient over the unconstrained vector.

    ``params`` may be a ``ParameterVector`` or a flat array. ``X`` may be a
    ``FeatureMatrix`` or a plain array.
    """
    theta = params.pack() if isinstance(params, ParameterVector) else np.asarray(params, dtype=float)
    if theta.shape != (spec.dim,):
        raise ValidationError(f"parameter vector must have length {spec.dim}, got {theta.shape}")
    X = getattr(X, "X", X)
    labels = np.asarray(labels)
    if np.asarray(X).shape[0] != labels.shape[0]:
        raise ValidationError(f"X has {np.asarray(X).shape[0]} rows but {labels.shape[0]} labels were given")
    logp, grad = LogPosterior(X, labels, spec)(theta)
    if not math.isfinite(logp):
        raise FloatingPointError("log density is not finite")
    bad = np.flatnonzero(~np.isfinite(grad))
    if bad.size:
        raise FloatingPointError(f"gradient is not finite at coordinate {int(bad[0])}")
    return LogDensityResult(logp=logp, grad=grad)


def tau2_conditional_logp(tau2: float, R_values, X, alpha, beta, spec: ModelSpec) -> float:
    """Log conditional density of tau2 given the regression parameters.

    Piecewise constant in tau2: it changes only where tau2 crosses an
    observed R value. Returns ``-inf`` outside the uniform prior's support.
    """
    lo, hi = spec.tau2_bounds
    if not (lo <= tau2 <= hi):
        return -math.inf
    X = np.asarray(getattr(X, "X", X), dtype=float)
    logp = log_softmax(np.asarray(alpha, dtype=float) + X @ np.asarray(beta, dtype=float).T)
    labels = assign_levels(R_values, spec.tau1, tau2)
    return float(logp[np.arange(labels.size), labels - 1].sum()) - math.log(hi - lo)
