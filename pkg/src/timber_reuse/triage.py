"""Field triage from the posterior-predictive probability of Level 1."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .errors import ValidationError

REDEPLOY_CUTOFF = 0.70
NDT_CUTOFF = 0.40


class TriageAction(str, Enum):
    REDEPLOY = "Redeploy"
    NDT_CHECK = "NdtCheck"
    DOWNGRADE_REJECT = "DowngradeReject"


@dataclass(frozen=True)
class TriageDecision:
    action: TriageAction
    p_level1: float
    cutoffs: tuple[float, float] = (REDEPLOY_CUTOFF, NDT_CUTOFF)

    def to_dict(self) -> dict:
        return {"action": self.action.value, "p_level1": self.p_level1, "cutoffs": list(self.cutoffs)}


def decide(p_level1: float, redeploy: float = REDEPLOY_CUTOFF, ndt: float = NDT_CUTOFF) -> TriageDecision:
    """``p >= redeploy`` redeploys, ``ndt <= p < redeploy`` asks for an NDT check, else downgrade."""
    if not (0.0 <= ndt <= redeploy <= 1.0):
        raise ValidationError(f"cutoffs must satisfy 0 <= ndt <= redeploy <= 1, got ({redeploy}, {ndt})")
    if not (isinstance(p_level1, (int, float)) and math.isfinite(p_level1) and 0.0 <= p_level1 <= 1.0):
        raise ValidationError(f"P(Level 1) must lie in [0, 1], got {p_level1!r}")
    if p_level1 >= redeploy:
        action = TriageAction.REDEPLOY
    elif p_level1 >= ndt:
        action = TriageAction.NDT_CHECK
    else:
        action = TriageAction.DOWNGRADE_REJECT
    return TriageDecision(action, float(p_level1), (redeploy, ndt))
