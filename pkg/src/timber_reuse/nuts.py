"""No-U-Turn sampler with multinomial trajectory sampling.

The transition follows the iterative-doubling scheme used by Stan: the
trajectory is extended forwards or backwards in time by subtrees of
doubling size, the next state is drawn from the trajectory with weights
``exp(-H)`` (uniform-progressive inside subtrees, biased-progressive
between them), and doubling stops on the generalized U-turn criterion
evaluated on the merged tree and across the two halves.

Warmup tunes the step size by dual averaging and a diagonal inverse mass
matrix from memoryless, doubling windows.

``gradfn(q)`` must return ``(logp, grad)`` for a 1-d float array ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DiagnosticsError, ValidationError

MAX_ENERGY_ERROR = 1000.0

GradFn = Callable[[np.ndarray], "tuple[float, np.ndarray]"]


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_warmup: int = 2000
    n_draws: int = 2000
    target_accept: float = 0.8
    max_treedepth: int = 10
    seed: int = 0
    tau2_grid_points: int = 151
    init_radius: float = 1.0

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValidationError("n_chains must be >= 1")
        if self.n_warmup < 100:
            raise ValidationError("n_warmup must be >= 100")
        if self.n_draws < 1:
            raise ValidationError("n_draws must be >= 1")
        if not 0 < self.target_accept < 1:
            raise ValidationError("target_accept must lie in (0, 1)")
        if not 1 <= self.max_treedepth <= 15:
            raise ValidationError("max_treedepth must lie in [1, 15]")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("seed must be a non-negative 64-bit integer")
        if self.tau2_grid_points < 2:
            raise ValidationError("tau2_grid_points must be >= 2")

    def to_dict(self) -> dict:
        return {
            "n_chains": self.n_chains,
            "n_warmup": self.n_warmup,
            "n_draws": self.n_draws,
            "target_accept": self.target_accept,
            "max_treedepth": self.max_treedepth,
            "seed": self.seed,
            "tau2_grid_points": self.tau2_grid_points,
            "init_radius": self.init_radius,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SamplerConfig":
        return cls(**d)


class LeapfrogState(NamedTuple):
    position: np.ndarray
    momentum: np.ndarray
    logp: float
    grad: np.ndarray


def leapfrog(position, momentum, step, gradfn: GradFn, inv_mass=None, grad=None) -> LeapfrogState:
    """One half-kick / drift / half-kick step.

    ``grad`` is the gradient at ``position`` if already known; only the
    gradient at the new position is evaluated.
    """
    q = np.asarray(position, dtype=float)
    p = np.asarray(momentum, dtype=float)
    if grad is None:
        _, grad = gradfn(q)
    if inv_mass is None:
        inv_mass = 1.0
    p = p + 0.5 * step * grad
    q = q + step * inv_mass * p
    logp, grad = gradfn(q)
    p = p + 0.5 * step * grad
    return LeapfrogState(q, p, logp, grad)


def _turning(sharp_a, sharp_b, rho) -> bool:
    return not (np.dot(sharp_a, rho) > 0 and np.dot(sharp_b, rho) > 0)


class _Tree:
    __slots__ = (
        "q", "p", "grad", "logp",
        "p_inner", "sharp_inner", "p_outer", "sharp_outer",
        "rho", "sample", "log_w",
    )


@dataclass
class TransitionStats:
    accept_prob: float
    depth: int
    divergent: bool
    energy: float
    n_leapfrog: int


class _Integrator:
    """Per-transition bookkeeping shared by the recursive tree builder."""

    def __init__(self, gradfn, inv_mass, step, H0, rng):
        self.gradfn = gradfn
        self.inv_mass = inv_mass
        self.step = step
        self.H0 = H0
        self.rng = rng
        self.n_leapfrog = 0
        self.sum_metro = 0.0
        self.divergent = False

    def build(self, q, p, grad, depth, direction):
        """Build a subtree of ``2**depth`` leapfrog steps; ``None`` if it is invalid."""
        if depth == 0:
            q, p, logp, grad = leapfrog(q, p, direction * self.step, self.gradfn, self.inv_mass, grad)
            self.n_leapfrog += 1
            sharp = self.inv_mass * p
            H = -logp + 0.5 * float(np.dot(p, sharp))
            if not math.isfinite(H):
                H = math.inf
            delta = H - self.H0
            if delta > MAX_ENERGY_ERROR or not np.all(np.isfinite(q)):
                self.divergent = True
                self.sum_metro += 0.0 if not math.isfinite(delta) else min(1.0, math.exp(-delta))
                return None
            self.sum_metro += 1.0 if delta <= 0 else math.exp(-delta)
            t = _Tree()
            t.q, t.p, t.grad, t.logp = q, p, grad, logp
            t.p_inner = t.p_outer = p
            t.sharp_inner = t.sharp_outer = sharp
            t.rho = p
            t.sample = (q, logp, grad, p)
            t.log_w = -delta
            return t

        first = self.build(q, p, grad, depth - 1, direction)
        if first is None:
            return None
        second = self.build(first.q, first.p, first.grad, depth - 1, direction)
        if second is None:
            return None

        t = _Tree()
        t.q, t.p, t.grad, t.logp = second.q, second.p, second.grad, second.logp
        t.p_inner, t.sharp_inner = first.p_inner, first.sharp_inner
        t.p_outer, t.sharp_outer = second.p_outer, second.sharp_outer
        t.log_w = np.logaddexp(first.log_w, second.log_w)
        # uniform multinomial sampling within a subtree
        if math.log(self.rng.random()) < second.log_w - t.log_w:
            t.sample = second.sample
        else:
            t.sample = first.sample
        t.rho = first.rho + second.rho
        if _turning(first.sharp_inner, second.sharp_outer, t.rho):
            return None
        if _turning(first.sharp_inner, second.sharp_inner, first.rho + second.p_inner):
            return None
        if _turning(first.sharp_outer, second.sharp_outer, second.rho + first.p_outer):
            return None
        return t


def nuts_transition(
    current,
    step: float,
    mass_diag,
    gradfn: GradFn,
    rng: np.random.Generator,
    max_treedepth: int = 10,
    logp_grad=None,
):
    """Draw the next state of the chain.

    ``mass_diag`` holds the diagonal of the inverse mass matrix (the
    estimated posterior variances). Returns ``(next_position, stats,
    (logp, grad))``; the trailing pair lets the caller skip re-evaluating
    the density at the new point.
    """
    q0 = np.asarray(current, dtype=float)
    inv_mass = np.asarray(mass_diag, dtype=float)
    if logp_grad is None:
        logp_grad = gradfn(q0)
    logp0, grad0 = logp_grad
    p0 = rng.standard_normal(q0.shape) / np.sqrt(inv_mass)
    sharp0 = inv_mass * p0
    H0 = -logp0 + 0.5 * float(np.dot(p0, sharp0))

    if max_treedepth == 0:
        # single leapfrog proposal with a Metropolis correction
        q1, p1, logp1, grad1 = leapfrog(q0, p0, step, gradfn, inv_mass, grad0)
        H1 = -logp1 + 0.5 * float(np.dot(p1, inv_mass * p1))
        delta = H1 - H0 if math.isfinite(H1) else math.inf
        divergent = delta > MAX_ENERGY_ERROR
        accept = 0.0 if not math.isfinite(delta) else min(1.0, math.exp(-delta))
        if rng.random() < accept:
            return q1, TransitionStats(accept, 0, divergent, H1, 1), (logp1, grad1)
        return q0, TransitionStats(accept, 0, divergent, H0, 1), (logp0, grad0)

    integ = _Integrator(gradfn, inv_mass, step, H0, rng)
    fwd = (q0, p0, grad0)
    bck = (q0, p0, grad0)
    p_fwd = p_bck = p0
    sharp_fwd = sharp_bck = sharp0
    rho = p0.copy()
    log_w = 0.0
    sample = (q0, logp0, grad0, p0)
    depth = 0

    while depth < max_treedepth:
        direction = 1 if rng.random() > 0.5 else -1
        start = fwd if direction == 1 else bck
        sub = integ.build(*start, depth, direction)
        if sub is None:
            break
        depth += 1
        # biased progressive sampling between old trajectory and new subtree
        if sub.log_w > log_w or math.log(rng.random()) < sub.log_w - log_w:
            sample = sub.sample
        log_w = np.logaddexp(log_w, sub.log_w)

        rho_old = rho
        rho = rho_old + sub.rho
        if direction == 1:
            fwd = (sub.q, sub.p, sub.grad)
            stop = (
                _turning(sharp_bck, sub.sharp_outer, rho)
                or _turning(sharp_bck, sub.sharp_inner, rho_old + sub.p_inner)
                or _turning(sharp_fwd, sub.sharp_outer, sub.rho + p_fwd)
            )
            p_fwd, sharp_fwd = sub.p_outer, sub.sharp_outer
        else:
            bck = (sub.q, sub.p, sub.grad)
            stop = (
                _turning(sub.sharp_outer, sharp_fwd, rho)
                or _turning(sub.sharp_outer, sharp_bck, sub.rho + p_bck)
                or _turning(sub.sharp_inner, sharp_fwd, rho_old + sub.p_inner)
            )
            p_bck, sharp_bck = sub.p_outer, sub.sharp_outer
        if stop:
            break

    q, logp, grad, p = sample
    energy = -logp + 0.5 * float(np.dot(p, inv_mass * p))
    accept = integ.sum_metro / max(integ.n_leapfrog, 1)
    stats = TransitionStats(accept, depth, integ.divergent, energy, integ.n_leapfrog)
    return q, stats, (logp, grad)


class DualAveraging:
    """Step-size adaptation toward a target mean acceptance statistic."""

    def __init__(self, step: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.restart(step)

    def restart(self, step: float) -> None:
        self.mu = math.log(10.0 * step)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def update(self, accept_stat: float) -> float:
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    @property
    def final_step(self) -> float:
        return math.exp(self.x_bar)


def find_reasonable_step(q, logp_grad, inv_mass, gradfn, rng, step=1.0) -> float:
    """Double or halve ``step`` until one leapfrog's acceptance crosses 0.8."""
    logp0, grad0 = logp_grad
    p = rng.standard_normal(q.shape) / np.sqrt(inv_mass)
    H0 = -logp0 + 0.5 * float(np.dot(p, inv_mass * p))
    direction = 0
    for _ in range(100):
        _, p1, logp1, _ = leapfrog(q, p, step, gradfn, inv_mass, grad0)
        H1 = -logp1 + 0.5 * float(np.dot(p1, inv_mass * p1))
        delta = H0 - H1
        if not math.isfinite(delta):
            delta = -math.inf
        new_dir = 1 if delta > math.log(0.8) else -1
        if direction == 0:
            direction = new_dir
        if direction == 1 and new_dir != 1:
            break
        if direction == -1 and new_dir != -1:
            break
        step = step * 2.0 if direction == 1 else step * 0.5
        if step > 1e7 or step < 1e-12:
            break
    return step


def adaptation_windows(n_warmup: int, init_buffer=75, term_buffer=50, base_window=25) -> tuple[int, int, list[int]]:
    """Slow-phase window end points (exclusive), returning ``(init, term, ends)``.

    When the warmup is too short for the default buffers, it is split
    15% / 75% / 10%.
    """
    if n_warmup < init_buffer + term_buffer + base_window:
        init_buffer = int(0.15 * n_warmup)
        term_buffer = int(0.1 * n_warmup)
        base_window = n_warmup - init_buffer - term_buffer
    slow_end = n_warmup - term_buffer
    ends = []
    start = init_buffer
    size = base_window
    while start < slow_end:
        end = start + size
        # extend the last window rather than leave a short one
        if end + 2 * size > slow_end:
            end = slow_end
        ends.append(end)
        start = end
        size *= 2
    return init_buffer, term_buffer, ends


class WelfordVariance:
    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x: np.ndarray) -> None:
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    def regularized(self) -> np.ndarray:
        n = self.n
        var = self.m2 / (n - 1)
        return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


@dataclass
class AdaptationResult:
    step_size: float
    mass_diag: np.ndarray
    position: np.ndarray
    n_divergent: int = 0
    accept_stats: list = field(default_factory=list)


def warmup_adapt(
    gradfn: GradFn,
    config: SamplerConfig,
    rng: np.random.Generator,
    start: np.ndarray,
    after_step: Callable[[np.ndarray, np.random.Generator], bool] | None = None,
) -> AdaptationResult:
    """Run ``config.n_warmup`` adapting iterations from ``start``.

    ``after_step(q, rng)`` runs after every transition (the threshold
    update hooks in here); when it returns True the density at ``q`` is
    re-evaluated because the target changed.
    """
    q = np.asarray(start, dtype=float).copy()
    dim = q.size
    inv_mass = np.ones(dim)
    lg = gradfn(q)
    if not math.isfinite(lg[0]):
        raise DiagnosticsError("log density is not finite at the initial point")
    step = find_reasonable_step(q, lg, inv_mass, gradfn, rng)
    da = DualAveraging(step, config.target_accept)
    init_buffer, term_buffer, window_ends = adaptation_windows(config.n_warmup)
    slow_end = config.n_warmup - term_buffer
    welford = WelfordVariance(dim)
    n_div = 0
    accepts = []

    for it in range(config.n_warmup):
        q, stats, lg = nuts_transition(q, step, inv_mass, gradfn, rng, config.max_treedepth, lg)
        n_div += stats.divergent
        accepts.append(stats.accept_prob)
        step = da.update(stats.accept_prob)
        if after_step is not None and after_step(q, rng):
            lg = gradfn(q)

        if init_buffer <= it < slow_end:
            welford.add(q)
            if window_ends and it + 1 == window_ends[0]:
                window_ends.pop(0)
                if welford.n >= 2:
                    inv_mass = welford.regularized()
                welford = WelfordVariance(dim)
                step = find_reasonable_step(q, lg, inv_mass, gradfn, rng, step)
                da.restart(step)

    if n_div == config.n_warmup:
        raise DiagnosticsError(
            "every warmup iteration diverged; try a smaller initial step or a higher target_accept"
        )
    return AdaptationResult(da.final_step, inv_mass, q, n_div, accepts)


@dataclass
class ChainResult:
    draws: np.ndarray
    tau2_draws: np.ndarray
    energy: np.ndarray
    divergent: np.ndarray
    tree_depth: np.ndarray
    accept_prob: np.ndarray
    n_leapfrog: np.ndarray
    step_size: float
    mass_diag: np.ndarray
    warmup_divergent: int = 0

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


def sample_chain(
    gradfn: GradFn,
    config: SamplerConfig,
    rng: np.random.Generator,
    start: np.ndarray,
    after_step=None,
    current_tau2: Callable[[], float] | None = None,
) -> ChainResult:
    """Warmup then ``config.n_draws`` NUTS transitions with a frozen step size and metric."""
    adapt = warmup_adapt(gradfn, config, rng, start, after_step)
    q = adapt.position
    step, inv_mass = adapt.step_size, adapt.mass_diag
    n = config.n_draws
    draws = np.empty((n, q.size))
    tau2 = np.full(n, np.nan)
    energy = np.empty(n)
    divergent = np.zeros(n, dtype=bool)
    depth = np.zeros(n, dtype=np.int64)
    accept = np.empty(n)
    n_leap = np.zeros(n, dtype=np.int64)
    lg = gradfn(q)
    for i in range(n):
        q, stats, lg = nuts_transition(q, step, inv_mass, gradfn, rng, config.max_treedepth, lg)
        if after_step is not None and after_step(q, rng):
            lg = gradfn(q)
        draws[i] = q
        if current_tau2 is not None:
            tau2[i] = current_tau2()
        energy[i] = stats.energy
        divergent[i] = stats.divergent
        depth[i] = stats.depth
        accept[i] = stats.accept_prob
        n_leap[i] = stats.n_leapfrog
    return ChainResult(
        draws=draws,
        tau2_draws=tau2,
        energy=energy,
        divergent=divergent,
        tree_depth=depth,
        accept_prob=accept,
        n_leapfrog=n_leap,
        step_size=step,
        mass_diag=inv_mass,
        warmup_divergent=adapt.n_divergent,
    )
