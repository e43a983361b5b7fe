"""Reuse levels from residual performance.

Levels partition R with an upper boundary ``tau1`` and a lower boundary
``tau2``: ``R >= tau1`` is L1 (direct reuse), ``tau2 <= R < tau1`` is L2
(reuse after trimming) and ``R < tau2`` is L3 (non-structural use).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

from .errors import ValidationError

TAU1_DEFAULT = 0.90
TAU2_BOUNDS_DEFAULT = (0.70, 0.85)


class ReuseLevel(IntEnum):
    """Ordinal code 1-3; a lower code means better reuse quality."""

    L1 = 1
    L2 = 2
    L3 = 3


@dataclass(frozen=True)
class Thresholds:
    tau1: float = TAU1_DEFAULT
    tau2: float = 0.75

    def __post_init__(self):
        if not (0 < self.tau2 < self.tau1 <= 1):
            raise ValidationError(f"thresholds need 0 < tau2 < tau1 <= 1, got tau1={self.tau1}, tau2={self.tau2}")


def assign_level(R: float, t: Thresholds) -> ReuseLevel:
    if R >= t.tau1:
        return ReuseLevel.L1
    if R >= t.tau2:
        return ReuseLevel.L2
    return ReuseLevel.L3


def assign_levels(R_values, tau1: float, tau2: float) -> np.ndarray:
    """Vectorized ``assign_level`` returning integer codes 1-3.

    Used by the sampler for relabeling so the CLI grade path and the fit
    share one rule.
    """
    R = np.asarray(R_values, dtype=float)
    return np.where(R >= tau1, 1, np.where(R >= tau2, 2, 3)).astype(np.int64)


def level_counts(R_values: Sequence[float], t: Thresholds) -> tuple[int, int, int]:
    levels = assign_levels(R_values, t.tau1, t.tau2)
    return tuple(int(np.count_nonzero(levels == k)) for k in (1, 2, 3))


@dataclass(frozen=True)
class LevelProportion:
    level: ReuseLevel
    mean: float
    sd: float


def proportions_over_draws(
    R_values: Sequence[float], tau2_draws: Sequence[float], tau1: float = TAU1_DEFAULT
) -> list[LevelProportion]:
    """Level proportions evaluated at every tau2 draw, summarized by mean and sd.

    The sd is the population sd across draws (0 for a single draw).
    """
    R = np.asarray(R_values, dtype=float)
    tau2 = np.asarray(tau2_draws, dtype=float).ravel()
    if tau2.size == 0:
        raise ValidationError("tau2_draws must be non-empty")
    if np.any(tau2 <= 0) or np.any(tau2 >= tau1):
        raise ValidationError("every tau2 draw must lie in (0, tau1)")
    if R.size == 0:
        raise ValidationError("R_values must be non-empty")
    n = R.size
    p1 = np.full(tau2.shape, np.count_nonzero(R >= tau1) / n)
    # fraction with R < tau2 per draw via sorted search
    sorted_R = np.sort(R)
    p3 = np.searchsorted(sorted_R, tau2, side="left") / n
    p2 = 1.0 - p1 - p3
    out = []
    for level, p in zip(ReuseLevel, (p1, p2, p3)):
        out.append(LevelProportion(level, float(p.mean()), float(p.std())))
    return out
