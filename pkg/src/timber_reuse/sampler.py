"""Joint sampling of the regression block and the lower threshold tau2.

Each iteration makes one NUTS transition of the continuous parameters with
labels fixed by the current tau2, then a sweep of independence Metropolis moves of
tau2 over an equally spaced grid on its prior support. The tau2
conditional is piecewise constant, so gradient moves cannot explore it.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DiagnosticsError, ValidationError
from .grading import assign_levels
from .model import LogPosterior, ModelSpec, log_softmax, natural_parameters, tau2_conditional_logp
from .nuts import ChainResult, SamplerConfig, sample_chain

DIVERGENCE_RATE_MAX = 0.10


def tau2_grid(spec: ModelSpec, n_points: int) -> np.ndarray:
    lo, hi = spec.tau2_bounds
    return np.linspace(lo, hi, n_points)


def tau2_grid_update(current_tau2, alpha, beta, R_values, X, spec: ModelSpec, rng, grid=None) -> float:
    """Independence Metropolis move of tau2 with a uniform proposal over ``grid``."""
    if grid is None:
        grid = tau2_grid(spec, 151)
    proposal = float(grid[rng.integers(len(grid))])
    log_u = math.log(rng.random())
    cur = tau2_conditional_logp(current_tau2, R_values, X, alpha, beta, spec)
    new = tau2_conditional_logp(proposal, R_values, X, alpha, beta, spec)
    return proposal if log_u < new - cur else float(current_tau2)


class ThresholdUpdate:
    """Stateful tau2 moves wired to a ``LogPosterior``'s labels.

    Called after every NUTS transition. The conditional log density of every
    grid point is tabulated in O(N + G) from cumulative sums over the sorted
    R values, then ``n_proposals`` independence Metropolis steps with uniform
    grid proposals run against the table. Returns True when the labels
    changed so the sampler re-evaluates the density.
    """

    def __init__(self, R_values, X, spec: ModelSpec, logpost: LogPosterior, grid: np.ndarray, tau2: float,
                 n_proposals: int | None = None):
        self.R = np.asarray(R_values, dtype=float)
        self.X = np.asarray(X, dtype=float)
        self.spec = spec
        self.logpost = logpost
        self.grid = np.asarray(grid, dtype=float)
        self.n_proposals = len(self.grid) if n_proposals is None else n_proposals
        # specimens below tau1 ordered by R; the k lowest are L3 when k of them lie below tau2
        below = np.flatnonzero(self.R < spec.tau1)
        self.order = below[np.argsort(self.R[below], kind="stable")]
        # k(tau2) for each grid point, consistent with assign_levels' "R < tau2 -> L3"
        self.k_grid = np.searchsorted(self.R[self.order], self.grid, side="left")
        self.idx = int(np.argmin(np.abs(self.grid - tau2)))
        self.labels = assign_levels(self.R, spec.tau1, self.tau2)
        logpost.set_labels(self.labels)

    @property
    def tau2(self) -> float:
        return float(self.grid[self.idx])

    def conditional_table(self, q) -> np.ndarray:
        """Log conditional of tau2 at each grid point, up to a constant."""
        alpha, beta = natural_parameters(q, self.spec)
        logp = log_softmax(alpha + self.X @ beta.T)
        d = logp[self.order, 2] - logp[self.order, 1]
        cum = np.concatenate([[0.0], np.cumsum(d)])
        return cum[self.k_grid]

    def __call__(self, q, rng) -> bool:
        k_old = self.k_grid[self.idx]
        self._conditional_sweep(q, rng)
        if self.k_grid[self.idx] == k_old:
            return False
        self.labels = assign_levels(self.R, self.spec.tau1, self.tau2)
        self.logpost.set_labels(self.labels)
        return True

    def _conditional_sweep(self, q, rng) -> None:
        table = self.conditional_table(q)
        props = rng.integers(len(self.grid), size=self.n_proposals)
        log_u = np.log(rng.random(self.n_proposals))
        idx = self.idx
        for prop, lu in zip(props, log_u):
            if lu < table[prop] - table[idx]:
                idx = int(prop)
        self.idx = idx

    def current(self) -> float:
        return self.tau2


@dataclass
class PosteriorDraws:
    chains: list[ChainResult]
    spec: ModelSpec
    config: SamplerConfig
    column_names: tuple[str, ...]
    column_means: np.ndarray
    column_sds: np.ndarray
    R_values: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        dims = {c.draws.shape for c in self.chains}
        if len(dims) != 1:
            raise ValidationError("all chains must share the draw count and dimension")

    @property
    def n_chains(self) -> int:
        return len(self.chains)

    @property
    def n_total(self) -> int:
        return sum(c.n_draws for c in self.chains)

    def stacked(self) -> np.ndarray:
        """All draws as an (n_chains * n_draws, D) array, chain-major."""
        return np.concatenate([c.draws for c in self.chains], axis=0)

    def tau2(self) -> np.ndarray:
        return np.concatenate([c.tau2_draws for c in self.chains])

    def natural(self) -> tuple[np.ndarray, np.ndarray]:
        """Stacked ``alpha`` (S, C) and ``beta`` (S, C, J)."""
        return natural_parameters(self.stacked(), self.spec)

    @property
    def n_divergent(self) -> int:
        return int(sum(c.divergent.sum() for c in self.chains))

    @property
    def divergence_rate(self) -> float:
        return self.n_divergent / max(self.n_total, 1)

    @property
    def unreliable(self) -> bool:
        return self.divergence_rate > DIVERGENCE_RATE_MAX

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Every reported quantity as an (n_chains, n_draws) array."""
        spec = self.spec
        C, J = spec.n_classes, spec.n_features
        per_chain = [natural_parameters(c.draws, spec) for c in self.chains]
        alpha = np.stack([a for a, _ in per_chain])
        beta = np.stack([b for _, b in per_chain])
        out = {}
        first = 1 if spec.reference_class else 0
        for c in range(first, C):
            out[f"alpha[{c + 1}]"] = alpha[:, :, c]
        for c in range(first, C):
            for j in range(J):
                out[f"beta[{c + 1},{self.column_names[j]}]"] = beta[:, :, c, j]
        raw = np.stack([c.draws for c in self.chains])
        off = C + C * J
        for j in range(J):
            out[f"lambda[{self.column_names[j]}]"] = np.exp(raw[:, :, off + j])
        out["tau_hs"] = np.exp(raw[:, :, -1])
        out["tau2"] = np.stack([c.tau2_draws for c in self.chains])
        return out

    def write_csv(self, fh) -> None:
        """Plain-text draw dump: one row per draw with chain id and sampler stats."""
        names = list(self.named_parameters())
        named = self.named_parameters()
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain", "draw"] + names + ["energy", "divergent", "tree_depth"])
        for ci, chain in enumerate(self.chains):
            for i in range(chain.n_draws):
                writer.writerow(
                    [ci, i]
                    + [repr(float(named[n][ci, i])) for n in names]
                    + [repr(float(chain.energy[i])), int(chain.divergent[i]), int(chain.tree_depth[i])]
                )


def _run_chain(chain_id, R_values, X, spec, config, seed_seq) -> ChainResult:
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    grid = tau2_grid(spec, config.tau2_grid_points)
    start = rng.uniform(-config.init_radius, config.init_radius, spec.dim)
    tau2 = float(grid[rng.integers(len(grid))])
    logpost = LogPosterior(X, assign_levels(R_values, spec.tau1, tau2), spec)
    update = ThresholdUpdate(R_values, X, spec, logpost, grid, tau2)
    try:
        return sample_chain(logpost, config, rng, start, after_step=update, current_tau2=update.current)
    except DiagnosticsError as exc:
        raise DiagnosticsError(f"chain {chain_id}: {exc}") from exc


def run_sampler(R_values, X, spec: ModelSpec, config: SamplerConfig, n_jobs: int = 1) -> PosteriorDraws:
    """Sample every chain and merge.

    Each chain draws from its own stream spawned from ``config.seed``, so
    the result does not depend on ``n_jobs``.
    """
    R = np.asarray(R_values, dtype=float)
    Xa = np.asarray(getattr(X, "X", X), dtype=float)
    if Xa.shape != (R.size, spec.n_features):
        raise ValidationError(f"X must be {R.size} x {spec.n_features}, got {Xa.shape}")
    if R.size < spec.n_classes:
        raise ValidationError(f"need at least {spec.n_classes} specimens, got {R.size}")
    seeds = np.random.SeedSequence(config.seed).spawn(config.n_chains)
    jobs = [(i, R, Xa, spec, config, seeds[i]) for i in range(config.n_chains)]
    if n_jobs > 1 and config.n_chains > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, config.n_chains)) as pool:
            chains = list(pool.map(_run_chain, *zip(*jobs)))
    else:
        chains = [_run_chain(*job) for job in jobs]
    names = getattr(X, "column_names", tuple(f"x{j + 1}" for j in range(spec.n_features)))
    means = getattr(X, "column_means", np.zeros(spec.n_features))
    sds = getattr(X, "column_sds", np.ones(spec.n_features))
    return PosteriorDraws(chains, spec, config, tuple(names), np.asarray(means), np.asarray(sds), R)
