"""Specimen records, control baselines, residual performance and predictors.

Residual performance ``R`` blends the retained flexural modulus and the
retained maximum stress of a specimen, each taken relative to the mean of
the unexposed controls with the same grain orientation::

    R = w_E * E / E_0 + w_sigma * sigma_max / sigma_0
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateFeatureError, MissingBaselineError, SchemaError, ValidationError

ORIENTATIONS = ("long", "cross")
GROUPS = (0, 1, 2)
GROUP_NAMES = {0: "Original", 1: "Set1", 2: "Set2"}

REQUIRED_COLUMNS = ("id", "group", "orientation", "modulus_gpa", "max_stress_mpa")
OPTIONAL_COLUMNS = {
    "density_kg_m3": "density",
    "moisture_pct": "moisture",
    "size_mm": "size",
    "hardness": "hardness",
}
FEATURE_NAMES = ("group", "orientation", "density", "moisture", "size", "hardness")
DEFAULT_FEATURES = ("group", "orientation")


@dataclass(frozen=True)
class SpecimenRecord:
    """One tested member. Modulus in GPa, stress in MPa."""

    id: str
    group: int
    orientation: str
    modulus: float
    max_stress: float
    density: float | None = None
    moisture: float | None = None
    size: float | None = None
    hardness: float | None = None

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValidationError(f"specimen {self.id!r}: group must be one of {GROUPS}, got {self.group}")
        if self.orientation not in ORIENTATIONS:
            raise ValidationError(
                f"specimen {self.id!r}: orientation must be 'long' or 'cross', got {self.orientation!r}"
            )
        if not (self.modulus > 0 and math.isfinite(self.modulus)):
            raise ValidationError(f"specimen {self.id!r}: modulus must be positive, got {self.modulus}")
        if not (self.max_stress > 0 and math.isfinite(self.max_stress)):
            raise ValidationError(f"specimen {self.id!r}: max_stress must be positive, got {self.max_stress}")

    def feature(self, name: str) -> float | None:
        """Raw numeric encoding of a predictor (orientation: long=0, cross=1)."""
        if name == "group":
            return float(self.group)
        if name == "orientation":
            return 1.0 if self.orientation == "cross" else 0.0
        if name in ("density", "moisture", "size", "hardness"):
            return getattr(self, name)
        raise ValidationError(f"unknown feature {name!r}; choose from {FEATURE_NAMES}")


@dataclass(frozen=True)
class Baseline:
    E_0: float
    sigma_0: float
    n_controls: int


@dataclass(frozen=True)
class BaselineTable:
    entries: Mapping[str, Baseline]

    def __getitem__(self, orientation: str) -> Baseline:
        try:
            return self.entries[orientation]
        except KeyError:
            raise MissingBaselineError(f"no baseline for orientation {orientation!r}") from None

    def __contains__(self, orientation: str) -> bool:
        return orientation in self.entries

    def to_dict(self) -> dict:
        return {
            k: {"E_0": b.E_0, "sigma_0": b.sigma_0, "n_controls": b.n_controls}
            for k, b in self.entries.items()
        }


@dataclass(frozen=True)
class MetricWeights:
    w_E: float = 0.8
    w_sigma: float = 0.2

    def __post_init__(self):
        if self.w_E < 0 or self.w_sigma < 0:
            raise ValidationError("metric weights must be non-negative")
        if abs(self.w_E + self.w_sigma - 1.0) > 1e-9:
            raise ValidationError(f"metric weights must sum to 1, got {self.w_E} + {self.w_sigma}")


@dataclass(frozen=True)
class FeatureMatrix:
    """Standardized predictors plus the raw moments needed to reuse the scaling.

    Standardization uses the population (ddof=0) standard deviation, so a
    balanced binary column maps to exactly -1/+1.
    """

    X: np.ndarray
    column_names: tuple[str, ...]
    column_means: np.ndarray
    column_sds: np.ndarray

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def transform(self, raw: np.ndarray) -> np.ndarray:
        """Standardize raw rows with the stored means and sds."""
        raw = np.atleast_2d(np.asarray(raw, dtype=float))
        if raw.shape[1] != self.n_features:
            raise ValidationError(
                f"expected {self.n_features} raw columns {list(self.column_names)}, got {raw.shape[1]}"
            )
        return (raw - self.column_means) / self.column_sds

    def raw(self) -> np.ndarray:
        return self.X * self.column_sds + self.column_means


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise ValidationError(f"row {row}: column {column!r} is not a number: {text!r}") from None


def load_specimens(path: str | Path) -> list[SpecimenRecord]:
    """Read specimen records from a CSV file.

    Required header columns are ``id,group,orientation,modulus_gpa,max_stress_mpa``;
    ``density_kg_m3,moisture_pct,size_mm,hardness`` are optional and an empty
    cell leaves the field unset. Row numbers in error messages count the
    header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: missing header row")
        header = [h.strip() for h in reader.fieldnames]
        reader.fieldnames = header
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise SchemaError(f"{path}: missing required column {col!r}")

        records = []
        for row_no, row in enumerate(reader, start=2):
            if not any((v or "").strip() for v in row.values()):
                continue
            group_text = (row["group"] or "").strip()
            try:
                group = int(group_text)
            except ValueError:
                raise ValidationError(f"row {row_no}: group must be 0, 1 or 2, got {group_text!r}") from None
            if group not in GROUPS:
                raise ValidationError(f"row {row_no}: group must be 0, 1 or 2, got {group}")
            orientation = (row["orientation"] or "").strip().lower()
            if orientation not in ORIENTATIONS:
                raise ValidationError(
                    f"row {row_no}: orientation must be 'long' or 'cross', got {row['orientation']!r}"
                )
            modulus = _parse_float(row["modulus_gpa"], "modulus_gpa", row_no)
            stress = _parse_float(row["max_stress_mpa"], "max_stress_mpa", row_no)
            if not modulus > 0:
                raise ValidationError(f"row {row_no}: modulus_gpa must be positive, got {modulus}")
            if not stress > 0:
                raise ValidationError(f"row {row_no}: max_stress_mpa must be positive, got {stress}")
            optional = {}
            for col, attr in OPTIONAL_COLUMNS.items():
                text = (row.get(col) or "").strip()
                if text:
                    optional[attr] = _parse_float(text, col, row_no)
            records.append(
                SpecimenRecord(
                    id=row["id"].strip(),
                    group=group,
                    orientation=orientation,
                    modulus=modulus,
                    max_stress=stress,
                    **optional,
                )
            )
    return records


def write_specimens(records: Iterable[SpecimenRecord], fh) -> None:
    """Write records in the input CSV schema, including optional columns."""
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(REQUIRED_COLUMNS) + list(OPTIONAL_COLUMNS))
    for r in records:
        opt = [getattr(r, attr) for attr in OPTIONAL_COLUMNS.values()]
        writer.writerow(
            [r.id, r.group, r.orientation, repr(r.modulus), repr(r.max_stress)]
            + ["" if v is None else repr(v) for v in opt]
        )


def compute_baselines(records: Sequence[SpecimenRecord]) -> BaselineTable:
    """Mean control (group 0) modulus and stress for each orientation present."""
    entries = {}
    for orient in ORIENTATIONS:
        present = [r for r in records if r.orientation == orient]
        if not present:
            continue
        controls = [r for r in present if r.group == 0]
        if not controls:
            raise MissingBaselineError(
                f"orientation {orient!r} has specimens but no group-0 controls to form a baseline"
            )
        # math.fsum keeps the mean independent of record order
        n = len(controls)
        entries[orient] = Baseline(
            E_0=math.fsum(r.modulus for r in controls) / n,
            sigma_0=math.fsum(r.max_stress for r in controls) / n,
            n_controls=n,
        )
    return BaselineTable(entries)


def residual_performance(
    record: SpecimenRecord,
    baselines: BaselineTable,
    weights: MetricWeights = MetricWeights(),
) -> float:
    base = baselines[record.orientation]
    if base.E_0 <= 0 or base.sigma_0 <= 0:
        raise ValidationError(f"baseline for {record.orientation!r} must be positive")
    return weights.w_E * (record.modulus / base.E_0) + weights.w_sigma * (record.max_stress / base.sigma_0)


def residual_performances(
    records: Sequence[SpecimenRecord],
    baselines: BaselineTable | None = None,
    weights: MetricWeights = MetricWeights(),
) -> np.ndarray:
    if baselines is None:
        baselines = compute_baselines(records)
    return np.array([residual_performance(r, baselines, weights) for r in records], dtype=float)


def build_features(records: Sequence[SpecimenRecord], selected: Sequence[str] = DEFAULT_FEATURES) -> FeatureMatrix:
    selected = tuple(selected)
    if not selected:
        raise ValidationError("at least one feature must be selected")
    for name in selected:
        if name not in FEATURE_NAMES:
            raise ValidationError(f"unknown feature {name!r}; choose from {FEATURE_NAMES}")
    if len(set(selected)) != len(selected):
        raise ValidationError(f"duplicate features in selection {selected}")
    raw = np.empty((len(records), len(selected)))
    for i, rec in enumerate(records):
        for j, name in enumerate(selected):
            value = rec.feature(name)
            if value is None:
                raise ValidationError(f"specimen {rec.id!r} has no value for feature {name!r}")
            raw[i, j] = value
    if len(records) == 0:
        raise ValidationError("cannot build features from an empty dataset")
    means = raw.mean(axis=0)
    sds = raw.std(axis=0)
    for j, name in enumerate(selected):
        if not sds[j] > 1e-12 * max(1.0, abs(means[j])):
            raise DegenerateFeatureError(f"feature {name!r} is constant across the dataset")
    X = (raw - means) / sds
    return FeatureMatrix(X=X, column_names=selected, column_means=means, column_sds=sds)


@dataclass(frozen=True)
class GroupStats:
    group: int
    n: int
    mean: float
    sd: float
    single_member: bool = False

    @property
    def name(self) -> str:
        return GROUP_NAMES.get(self.group, str(self.group))


def descriptive_stats(R_values: Mapping[int, Sequence[float]]) -> list[GroupStats]:
    """Per-group n, mean and sample (ddof=1) standard deviation of R.

    A group with a single member reports sd 0 and sets ``single_member``.
    """
    table = []
    for group in sorted(R_values):
        values = np.asarray(R_values[group], dtype=float)
        if values.size == 0:
            raise ValidationError(f"group {group} has no values")
        if values.size == 1:
            warnings.warn(f"group {group} has a single member; sd reported as 0", stacklevel=2)
            table.append(GroupStats(group, 1, float(values[0]), 0.0, single_member=True))
            continue
        table.append(GroupStats(group, int(values.size), float(values.mean()), float(values.std(ddof=1))))
    return table


def group_values(records: Sequence[SpecimenRecord], R: Sequence[float]) -> dict[int, list[float]]:
    out: dict[int, list[float]] = {}
    for rec, r in zip(records, R):
        out.setdefault(rec.group, []).append(float(r))
    return out
