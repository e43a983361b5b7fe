"""Synthetic specimen data calibrated to the published group statistics.

R is drawn per (group, orientation) from a normal truncated to (0, 1.3)
whose location and scale are solved so that the truncated moments hit the
targets. Cross-grain members sit ``offset / 2`` below the group mean and
long-grain members the same amount above, with the within-orientation sd
shrunk so the balanced group mixture keeps the published sd. Each R is then
split into a modulus ratio and a stress ratio with
``0.8 * E / E_0 + 0.2 * sigma / sigma_0 = R``, sharing the deficit
``1 - R`` in the proportions seen after two wet-dry cycles.

This is a test oracle, not a model of real timber.
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import optimize, stats

from .errors import ValidationError
from .specimens import SpecimenRecord

R_BOUNDS = (0.0, 1.3)

# group -> (mean R, sd R)
GROUP_MOMENTS = {0: (1.000, 0.118), 1: (0.952, 0.097), 2: (0.748, 0.268)}

# control means per orientation: (modulus GPa, max stress MPa)
CONTROL_MEANS = {"long": (10.59, 113.31), "cross": (1.98, 37.38)}
# two-cycle means per orientation, used only for the deficit split
TWO_CYCLE_MEANS = {"long": (8.36, 95.01), "cross": (1.58, 34.38)}

PROFILES = {
    # group -> mean R gap between long and cross members
    "calibrated": {0: 0.0, 1: 0.071, 2: 0.135},
    "no-orientation": {0: 0.0, 1: 0.0, 2: 0.0},
    # wider gaps for shrinkage checks; group moments unchanged
    "shrinkage": {0: 0.0, 1: 0.18, 2: 0.40},
}

NOISE_FEATURES = {
    "density": (540.0, 35.0),
    "moisture": (11.5, 1.2),
    "size": (50.0, 2.0),
    "hardness": (2.5, 0.3),
}

W_E, W_SIGMA = 0.8, 0.2


def _deficit_shares(orientation: str) -> tuple[float, float]:
    """``(k_E, k_sigma)`` with ``W_E*k_E + W_SIGMA*k_sigma = 1``."""
    E0, s0 = CONTROL_MEANS[orientation]
    E2, s2 = TWO_CYCLE_MEANS[orientation]
    ratio = (1 - E2 / E0) / (1 - s2 / s0)
    k_sigma = 1.0 / (W_E * ratio + W_SIGMA)
    return ratio * k_sigma, k_sigma


@functools.lru_cache(maxsize=None)
def truncated_normal_params(mean: float, sd: float, lower: float = R_BOUNDS[0], upper: float = R_BOUNDS[1]):
    """Parent ``(loc, scale)`` whose truncation to ``(lower, upper)`` has the given mean and sd."""

    def moments(params):
        loc, log_scale = params
        scale = math.exp(log_scale)
        a, b = (lower - loc) / scale, (upper - loc) / scale
        m, v = stats.truncnorm.stats(a, b, loc=loc, scale=scale, moments="mv")
        return [float(m) - mean, math.sqrt(float(v)) - sd]

    sol = optimize.root(moments, [mean, math.log(sd)], method="hybr", options={"xtol": 1e-12})
    if not sol.success or max(abs(r) for r in moments(sol.x)) > 1e-9:
        raise ValidationError(f"cannot calibrate a truncated normal to mean={mean}, sd={sd}")
    return float(sol.x[0]), math.exp(float(sol.x[1]))


def _cell_moments(group: int, orientation: str, profile: str) -> tuple[float, float]:
    mean, sd = GROUP_MOMENTS[group]
    offset = PROFILES[profile][group]
    shift = offset / 2 if orientation == "long" else -offset / 2
    within = math.sqrt(sd**2 - offset**2 / 4)
    return mean + shift, within


def sample_R(group: int, orientation: str, n: int, rng: np.random.Generator, profile: str = "calibrated") -> np.ndarray:
    mean, sd = _cell_moments(group, orientation, profile)
    loc, scale = truncated_normal_params(mean, sd)
    a, b = (R_BOUNDS[0] - loc) / scale, (R_BOUNDS[1] - loc) / scale
    return stats.truncnorm.rvs(a, b, loc=loc, scale=scale, size=n, random_state=rng)


def split_ratios(R: float, orientation: str) -> tuple[float, float]:
    """Modulus and stress ratios reproducing ``R`` under the 0.8/0.2 weights."""
    k_E, _ = _deficit_shares(orientation)
    r_E = 1.0 - k_E * (1.0 - R)
    # keep both ratios positive for very low R
    r_E = max(r_E, 0.5 * R)
    r_s = (R - W_E * r_E) / W_SIGMA
    return r_E, r_s


def simulate_specimens(seed: int, n_per_group: int = 10, profile: str = "calibrated") -> list[SpecimenRecord]:
    """Generate ``n_per_group`` specimens for each cycle group, alternating orientation."""
    if n_per_group < 1:
        raise ValidationError("n_per_group must be >= 1")
    if profile not in PROFILES:
        raise ValidationError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    rng = np.random.default_rng(seed)
    records = []
    idx = 0
    for group in (0, 1, 2):
        orientations = ["long" if i % 2 == 0 else "cross" for i in range(n_per_group)]
        R_by_orient = {
            o: iter(sample_R(group, o, orientations.count(o), rng, profile)) for o in ("long", "cross")
        }
        for orient in orientations:
            R = float(next(R_by_orient[orient]))
            r_E, r_s = split_ratios(R, orient)
            E0, s0 = CONTROL_MEANS[orient]
            features = {name: round(float(rng.normal(mu, sd)), 2) for name, (mu, sd) in NOISE_FEATURES.items()}
            idx += 1
            records.append(
                SpecimenRecord(
                    id=f"S{idx:04d}",
                    group=group,
                    orientation=orient,
                    modulus=round(E0 * r_E, 6),
                    max_stress=round(s0 * r_s, 4),
                    **features,
                )
            )
    return records
