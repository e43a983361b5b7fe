"""Exception hierarchy shared by the library and the CLI."""


class TimberReuseError(Exception):
    """Base class for all package errors."""


class SchemaError(TimberReuseError):
    """Input file is missing a required column or is otherwise malformed."""


class ValidationError(TimberReuseError):
    """A value violates a domain constraint."""


class MissingBaselineError(TimberReuseError):
    """An orientation has no control specimens to build a baseline from."""


class DegenerateFeatureError(TimberReuseError):
    """A selected predictor has zero variance and cannot be standardized."""


class DiagnosticsError(TimberReuseError):
    """Sampler warmup failed outright."""


class ArtifactError(TimberReuseError):
    """Fit artifacts are missing, corrupted, or from an unsupported version."""
