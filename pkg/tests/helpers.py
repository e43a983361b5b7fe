"""Shared numerical oracles for the test modules."""

import numpy as np

from timber_reuse.model import LogPosterior, ModelSpec


def fd_gradient(f, theta, h=1e-5):
    g = np.empty_like(theta)
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = h
        g[k] = (f(theta + e) - f(theta - e)) / (2 * h)
    return g


def gradient_gate(J, n_points=20, n_rows=30, seed=0, reference_class=False, use_reference=False):
    """Worst per-coordinate relative error of the analytic gradient over random points."""
    rng = np.random.default_rng(seed)
    spec = ModelSpec(n_features=J, reference_class=reference_class)
    X = rng.standard_normal((n_rows, J))
    labels = rng.integers(1, 4, n_rows)
    lp = LogPosterior(X, labels, spec)
    fn = lp.reference if use_reference else lp
    worst = 0.0
    for _ in range(n_points):
        theta = rng.normal(0, 0.8, spec.dim)
        _, grad = fn(theta)
        fd = fd_gradient(lambda t: fn(t)[0], theta)
        rel = np.abs(grad - fd) / np.maximum(1.0, np.maximum(np.abs(grad), np.abs(fd)))
        worst = max(worst, float(rel.max()))
    return worst


def ar1(n, rho, rng):
    x = np.empty(n)
    x[0] = rng.standard_normal() / np.sqrt(1 - rho**2)
    eps = rng.standard_normal(n)
    for i in range(1, n):
        x[i] = rho * x[i - 1] + eps[i]
    return x
