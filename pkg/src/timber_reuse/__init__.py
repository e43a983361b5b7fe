"""Probabilistic reuse grading for moisture-exposed engineered timber."""

from .errors import (
    ArtifactError,
    DegenerateFeatureError,
    DiagnosticsError,
    MissingBaselineError,
    SchemaError,
    TimberReuseError,
    ValidationError,
)
from .specimens import (
    BaselineTable,
    FeatureMatrix,
    MetricWeights,
    SpecimenRecord,
    build_features,
    compute_baselines,
    descriptive_stats,
    load_specimens,
    residual_performance,
)
from .grading import ReuseLevel, Thresholds, assign_level, level_counts, proportions_over_draws
from .triage import TriageAction, TriageDecision, decide

__version__ = "0.1.0"
