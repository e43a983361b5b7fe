"""End-to-end pipelines behind the CLI subcommands.

Fit artifacts live in one output directory:

``report.json``
    versioned report (config echo, statistics, diagnostics, triage)
``draws.csv``
    plain-text posterior draws on the natural scale, one row per draw
``plots/*.csv``
    numeric series behind the figures, written by ``render_report``
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import hdi, summarize
from .errors import ArtifactError, ValidationError
from .evaluation import (
    classification_report,
    coefficient_importance,
    mean_class_probs,
    posterior_mean_logits,
    predictive_probs,
)
from .grading import (
    TAU1_DEFAULT,
    TAU2_BOUNDS_DEFAULT,
    Thresholds,
    assign_level,
    assign_levels,
    level_counts,
    proportions_over_draws,
)
from .model import ModelSpec
from .nuts import SamplerConfig
from .sampler import PosteriorDraws, run_sampler
from .simulate import simulate_specimens
from .specimens import (
    DEFAULT_FEATURES,
    GROUP_NAMES,
    MetricWeights,
    build_features,
    compute_baselines,
    descriptive_stats,
    group_values,
    load_specimens,
    residual_performance,
    write_specimens,
)
from .triage import NDT_CUTOFF, REDEPLOY_CUTOFF, decide

REPORT_VERSION = 1
FIXED_TAU2 = 0.75
REPORT_KEYS = (
    "config",
    "descriptive_stats",
    "tau2_posterior",
    "level_proportions",
    "diagnostics",
    "classification",
    "importance",
    "triage",
)


@dataclass
class RunConfig:
    input: Path
    out_dir: Path | None = None
    features: tuple[str, ...] = DEFAULT_FEATURES
    weights: MetricWeights = field(default_factory=MetricWeights)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    tau1: float = TAU1_DEFAULT
    tau2_bounds: tuple[float, float] = TAU2_BOUNDS_DEFAULT
    fixed_tau2: float = FIXED_TAU2
    cutoffs: tuple[float, float] = (REDEPLOY_CUTOFF, NDT_CUTOFF)
    reference_class: bool = False
    write_draws: bool = True
    n_jobs: int = 1

    def model_spec(self) -> ModelSpec:
        return ModelSpec(
            n_features=len(self.features),
            tau1=self.tau1,
            tau2_bounds=tuple(self.tau2_bounds),
            reference_class=self.reference_class,
        )

    def to_dict(self) -> dict:
        # n_jobs and out_dir are left out: they do not change the results
        return {
            "input": str(self.input),
            "features": list(self.features),
            "weights": {"w_E": self.weights.w_E, "w_sigma": self.weights.w_sigma},
            "sampler": self.sampler.to_dict(),
            "tau1": self.tau1,
            "tau2_bounds": list(self.tau2_bounds),
            "fixed_tau2": self.fixed_tau2,
            "cutoffs": {"redeploy": self.cutoffs[0], "ndt": self.cutoffs[1]},
            "reference_class": self.reference_class,
        }


def _clean(obj):
    """JSON-safe copy: NaN/inf become None, numpy scalars become Python numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps_report(report: dict) -> str:
    return json.dumps(_clean(report), indent=2, allow_nan=False) + "\n"


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass
class FitResult:
    report: dict
    draws: PosteriorDraws
    draws_csv: str

    @property
    def diagnostics_passed(self) -> bool:
        return bool(self.report["diagnostics"]["flags"]["passed"]) and not self.draws.unreliable


def fit(config: RunConfig) -> FitResult:
    """Ingest, compute R, sample, diagnose, evaluate and triage. Writes nothing."""
    records = load_specimens(config.input)
    if not records:
        raise ValidationError(f"{config.input}: no specimens to fit")
    baselines = compute_baselines(records)
    R = np.array([residual_performance(r, baselines, config.weights) for r in records])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        stats = descriptive_stats(group_values(records, R))
    fm = build_features(records, config.features)
    spec = config.model_spec()
    draws = run_sampler(R, fm, spec, config.sampler, n_jobs=config.n_jobs)
    summary = summarize(draws)

    tau2 = draws.tau2()
    tau2_median = float(np.median(tau2))
    t_lo, t_hi = hdi(tau2) if tau2.size >= 2 else (float(tau2[0]), float(tau2[0]))
    tau2_row = summary.row("tau2")

    props = proportions_over_draws(R, tau2, config.tau1)
    fixed = Thresholds(config.tau1, config.fixed_tau2)
    fixed_counts = level_counts(R, fixed)

    labels = assign_levels(R, config.tau1, tau2_median)
    logits = posterior_mean_logits(draws, fm)
    probs = predictive_probs(draws, fm)
    clf = classification_report(labels, logits, probs)
    importance = coefficient_importance(draws)

    triage = []
    for i, rec in enumerate(records):
        decision = decide(float(min(1.0, max(0.0, probs[i, 0]))), *config.cutoffs)
        triage.append(
            {
                "id": rec.id,
                "group": rec.group,
                "orientation": rec.orientation,
                "R": float(R[i]),
                "level": int(labels[i]),
                "predicted_level": int(clf.predicted[i]),
                "p_level": probs[i].tolist(),
                "p_level1": decision.p_level1,
                "action": decision.action.value,
            }
        )

    draws_csv = ""
    if config.write_draws:
        buf = io.StringIO()
        draws.write_csv(buf)
        draws_csv = buf.getvalue()

    report = {
        "format_version": REPORT_VERSION,
        "config": config.to_dict(),
        "seed": config.sampler.seed,
        "baselines": baselines.to_dict(),
        "descriptive_stats": [
            {"group": s.group, "name": s.name, "n": s.n, "mean": s.mean, "sd": s.sd, "single_member": s.single_member}
            for s in stats
        ],
        "tau2_posterior": {
            "median": tau2_median,
            "mean": float(tau2.mean()),
            "sd": float(tau2.std(ddof=1)) if tau2.size > 1 else 0.0,
            "hdi_low": t_lo,
            "hdi_high": t_hi,
            "rhat": tau2_row.rhat,
            "ess_bulk": tau2_row.ess_bulk,
            "tau1": config.tau1,
            "prior_bounds": list(config.tau2_bounds),
        },
        "level_proportions": {
            "over_draws": [{"level": int(p.level), "mean": p.mean, "sd": p.sd} for p in props],
            "fixed_threshold": {
                "tau1": config.tau1,
                "tau2": config.fixed_tau2,
                "counts": list(fixed_counts),
                "proportions": [c / len(R) for c in fixed_counts],
            },
        },
        "diagnostics": summary.to_dict()
        | {
            "n_chains": draws.n_chains,
            "n_draws_per_chain": draws.chains[0].n_draws,
            "step_size": [c.step_size for c in draws.chains],
            "mean_tree_depth": [float(c.tree_depth.mean()) for c in draws.chains],
            "treedepth_saturated": int(sum((c.tree_depth >= config.sampler.max_treedepth).sum() for c in draws.chains)),
            "unreliable": draws.unreliable,
        },
        "classification": clf.to_dict()
        | {"label_tau2": tau2_median, "prediction_rule": "argmax of posterior-mean logits"},
        "importance": {
            "predictors": [imp.to_dict() for imp in importance],
            "retained": [imp.name for imp in importance if imp.retained],
        },
        "triage": {"cutoffs": {"redeploy": config.cutoffs[0], "ndt": config.cutoffs[1]}, "specimens": triage},
        "fit": {
            "spec": spec.to_dict(),
            "column_names": list(fm.column_names),
            "column_means": fm.column_means.tolist(),
            "column_sds": fm.column_sds.tolist(),
            "observed_raw_ranges": {
                name: [float(lo), float(hi)]
                for name, lo, hi in zip(fm.column_names, fm.raw().min(axis=0), fm.raw().max(axis=0))
            },
            "draws_file": "draws.csv" if config.write_draws else None,
            "draws_sha256": _sha256(draws_csv) if config.write_draws else None,
        },
    }
    return FitResult(report, draws, draws_csv)


def write_fit(result: FitResult, out_dir: Path) -> None:
    out_dir = Path(out_dir)
    if result.draws_csv:
        atomic_write(out_dir / "draws.csv", result.draws_csv)
    atomic_write(out_dir / "report.json", dumps_report(result.report))


@dataclass
class LoadedFit:
    """Posterior reloaded from fit artifacts; enough for prediction and reporting."""

    report: dict
    spec: ModelSpec
    column_names: tuple[str, ...]
    column_means: np.ndarray
    column_sds: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def natural(self):
        return self.alpha, self.beta


def load_report(out_dir: Path) -> dict:
    path = Path(out_dir) / "report.json"
    if not path.exists():
        raise ArtifactError(f"{path} not found; run `fit` first")
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path} is not valid JSON: {exc}") from None
    version = report.get("format_version")
    if not isinstance(version, int):
        raise ArtifactError(f"{path} has no format_version")
    if version > REPORT_VERSION:
        raise ArtifactError(f"{path} has format_version {version}; this build reads up to {REPORT_VERSION}")
    missing = [k for k in REPORT_KEYS + ("fit",) if k not in report]
    if missing:
        raise ArtifactError(f"{path} is missing sections {missing}")
    return report


def load_fit(out_dir: Path) -> LoadedFit:
    report = load_report(out_dir)
    meta = report["fit"]
    spec = ModelSpec.from_dict(meta["spec"])
    if not meta.get("draws_file"):
        raise ArtifactError("the fit was run without a draw dump; prediction needs draws.csv")
    path = Path(out_dir) / meta["draws_file"]
    if not path.exists():
        raise ArtifactError(f"{path} not found")
    text = path.read_text(encoding="utf-8")
    if _sha256(text) != meta["draws_sha256"]:
        raise ArtifactError(f"{path} does not match the checksum recorded in report.json")
    rows = list(csv.DictReader(io.StringIO(text)))
    names = meta["column_names"]
    C, J = spec.n_classes, spec.n_features
    S = len(rows)
    alpha = np.zeros((S, C))
    beta = np.zeros((S, C, J))
    first = 1 if spec.reference_class else 0
    try:
        for s, row in enumerate(rows):
            for c in range(first, C):
                alpha[s, c] = float(row[f"alpha[{c + 1}]"])
                for j, name in enumerate(names):
                    beta[s, c, j] = float(row[f"beta[{c + 1},{name}]"])
    except (KeyError, ValueError) as exc:
        raise ArtifactError(f"{path} is malformed: {exc}") from None
    return LoadedFit(
        report=report,
        spec=spec,
        column_names=tuple(names),
        column_means=np.asarray(meta["column_means"], dtype=float),
        column_sds=np.asarray(meta["column_sds"], dtype=float),
        alpha=alpha,
        beta=beta,
    )


def predict(out_dir: Path, cycles: int, orientation: str, extra: dict | None = None, cutoffs=None) -> dict:
    """P(Level 1) and the triage action for one member described by field features."""
    loaded = load_fit(out_dir)
    orientation = str(orientation).strip().lower()
    if orientation not in ("long", "cross"):
        raise ValidationError(f"orientation must be 'long' or 'cross', got {orientation!r}")
    values = {"group": float(cycles), "orientation": 1.0 if orientation == "cross" else 0.0}
    values.update({k: float(v) for k, v in (extra or {}).items()})
    missing = [n for n in loaded.column_names if n not in values]
    if missing:
        raise ValidationError(f"the fit uses features {list(loaded.column_names)}; missing {missing}")
    raw = np.array([[values[n] for n in loaded.column_names]])
    warn = []
    ranges = loaded.report["fit"].get("observed_raw_ranges", {})
    for name, v in zip(loaded.column_names, raw[0]):
        lo, hi = ranges.get(name, (-math.inf, math.inf))
        if not lo <= v <= hi:
            warn.append(f"{name}={v:g} is outside the fitted range [{lo:g}, {hi:g}]")
    if cycles not in (0, 1, 2):
        warn.append(f"cycles={cycles} is outside the fit's group coding 0/1/2")
    x = (raw - loaded.column_means) / loaded.column_sds
    probs = mean_class_probs(loaded.alpha, loaded.beta, x)[0]
    if cutoffs is None:
        c = loaded.report["triage"]["cutoffs"]
        cutoffs = (c["redeploy"], c["ndt"])
    decision = decide(float(min(1.0, max(0.0, probs[0]))), *cutoffs)
    return {
        "cycles": cycles,
        "orientation": orientation,
        "features": dict(zip(loaded.column_names, raw[0].tolist())),
        "p_level": probs.tolist(),
        "p_level1": decision.p_level1,
        "action": decision.action.value,
        "cutoffs": {"redeploy": cutoffs[0], "ndt": cutoffs[1]},
        "warnings": warn,
    }


def grade(input_path: Path, weights: MetricWeights, thresholds: Thresholds) -> dict:
    """Deterministic R and level per specimen at fixed thresholds; no sampling."""
    records = load_specimens(input_path)
    rows = []
    if records:
        baselines = compute_baselines(records)
        for rec in records:
            R = residual_performance(rec, baselines, weights)
            rows.append(
                {"id": rec.id, "group": rec.group, "orientation": rec.orientation, "R": R,
                 "level": int(assign_level(R, thresholds))}
            )
    counts = level_counts([r["R"] for r in rows], thresholds)
    n = len(rows)
    return {
        "thresholds": {"tau1": thresholds.tau1, "tau2": thresholds.tau2},
        "weights": {"w_E": weights.w_E, "w_sigma": weights.w_sigma},
        "specimens": rows,
        "counts": list(counts),
        "proportions": [c / n for c in counts] if n else [0.0, 0.0, 0.0],
    }


def grade_csv(result: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "group", "orientation", "R", "level"])
    for r in result["specimens"]:
        w.writerow([r["id"], r["group"], r["orientation"], f"{r['R']:.6f}", r["level"]])
    return buf.getvalue()


def simulate_csv(seed: int, n_per_group: int, profile: str = "calibrated") -> str:
    buf = io.StringIO()
    write_specimens(simulate_specimens(seed, n_per_group, profile), buf)
    return buf.getvalue()


def _histogram_rows(report: dict, width: float = 0.05) -> list[list]:
    edges = np.round(np.arange(0.0, 1.3 + width / 2, width), 10)
    by_group: dict[int, list[float]] = {}
    for s in report["triage"]["specimens"]:
        by_group.setdefault(s["group"], []).append(s["R"])
    rows = []
    for g in sorted(by_group):
        vals = np.clip(by_group[g], edges[0], edges[-1])
        counts, _ = np.histogram(vals, bins=edges)
        for lo, hi, c in zip(edges[:-1], edges[1:], counts):
            rows.append([GROUP_NAMES.get(g, str(g)), f"{lo:.2f}", f"{hi:.2f}", int(c)])
    tau1 = report["config"]["tau1"]
    rows.append(["reference_tau1", f"{tau1:.2f}", f"{tau1:.2f}", ""])
    return rows


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def render_report(out_dir: Path) -> tuple[str, dict[str, str]]:
    """Text summary plus plot-data CSVs (name -> content). Writes nothing."""
    report = load_report(out_dir)
    meta = report["fit"]
    if meta.get("draws_file"):
        path = Path(out_dir) / meta["draws_file"]
        if not path.exists() or _sha256(path.read_text(encoding="utf-8")) != meta["draws_sha256"]:
            raise ArtifactError(f"{path} is missing or does not match report.json")

    diag = report["diagnostics"]
    lines = ["Residual performance by group", "  group       n    mean      sd"]
    for s in report["descriptive_stats"]:
        flag = "  (single member)" if s["single_member"] else ""
        lines.append(f"  {s['name']:<9} {s['n']:>3} {s['mean']:>7.3f} {s['sd']:>7.3f}{flag}")
    t = report["tau2_posterior"]
    lines += [
        "",
        f"Lower threshold tau2: median {t['median']:.3f}, 95% HDI {t['hdi_low']:.3f}-{t['hdi_high']:.3f}"
        f" (tau1 fixed at {t['tau1']:.2f})",
        "",
        "Level proportions over posterior draws",
    ]
    for p in report["level_proportions"]["over_draws"]:
        lines.append(f"  L{p['level']}: {p['mean']:.3f} +/- {p['sd']:.3f}")
    ft = report["level_proportions"]["fixed_threshold"]
    lines.append(f"  at tau2 = {ft['tau2']:.2f}: counts L1/L2/L3 = {ft['counts']}")
    c = report["classification"]
    lines += ["", f"Accuracy {c['accuracy']:.3f}, multiclass Brier {c['brier']:.3f}", "  confusion (rows true, cols predicted):"]
    lines += ["    " + " ".join(f"{v:>4d}" for v in row) for row in c["confusion"]]
    lines += ["", "Predictor importance (mean |beta| over classes)"]
    for p in report["importance"]["predictors"]:
        lines.append(f"  {p['name']:<12} {p['mean_abs_beta']:.3f}{'  retained' if p['retained'] else ''}")
    fmt = lambda v: "nan" if v is None else f"{v:.3f}"
    lines += [
        "",
        f"Diagnostics: max R-hat {fmt(diag['max_rhat'])}, min bulk ESS {fmt(diag['min_ess_bulk'])},"
        f" divergences {diag['n_divergent']} ({diag['divergence_rate']:.1%}),"
        f" {'PASS' if diag['flags']['passed'] else 'FAIL'}",
    ]
    if diag["n_chains"] == 1:
        lines.append("Caveat: single chain; R-hat only compares the two halves of that chain.")
    if diag.get("unreliable"):
        lines.append("Caveat: divergence rate above 10%; treat the fit as unreliable.")

    plots = {
        "r_histogram.csv": _csv(["series", "bin_low", "bin_high", "count"], _histogram_rows(report)),
        "level_proportions.csv": _csv(
            ["level", "mean", "sd"],
            [[p["level"], p["mean"], p["sd"]] for p in report["level_proportions"]["over_draws"]],
        ),
        "coefficient_hdis.csv": _csv(
            ["predictor", "level", "mean", "hdi_low", "hdi_high"],
            [
                [p["name"], k + 1, p["class_means"][k], p["class_hdis"][k][0], p["class_hdis"][k][1]]
                for p in report["importance"]["predictors"]
                for k in range(len(p["class_means"]))
            ],
        ),
        "confusion.csv": _csv(
            ["true_level", "pred_L1", "pred_L2", "pred_L3"],
            [[k + 1] + row for k, row in enumerate(c["confusion"])],
        ),
    }
    return "\n".join(lines) + "\n", plots
