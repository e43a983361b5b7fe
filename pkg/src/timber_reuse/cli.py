"""Command-line interface: ``fit``, ``predict``, ``grade``, ``simulate``, ``report``.

Exit codes: 0 success, 1 validation/config error, 2 diagnostics failure,
3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback
from pathlib import Path

from .errors import DiagnosticsError, TimberReuseError
from .grading import Thresholds
from .nuts import SamplerConfig
from .simulate import PROFILES
from .specimens import DEFAULT_FEATURES, MetricWeights
from . import workflow

EXIT_OK, EXIT_INVALID, EXIT_DIAGNOSTICS, EXIT_INTERNAL = 0, 1, 2, 3


def _features(text: str) -> tuple[str, ...]:
    return tuple(f.strip() for f in text.split(",") if f.strip())


def _add_weights(p):
    p.add_argument("--w-e", type=float, default=0.8, help="stiffness weight (default 0.8)")
    p.add_argument("--w-sigma", type=float, default=None, help="strength weight (default 1 - w_E)")


def _weights(args) -> MetricWeights:
    w_sigma = 1.0 - args.w_e if args.w_sigma is None else args.w_sigma
    return MetricWeights(args.w_e, w_sigma)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timber-reuse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the Bayesian reuse-level model")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--warmup", type=int, default=2000)
    p.add_argument("--draws", type=int, default=2000)
    p.add_argument("--target-accept", type=float, default=0.8)
    p.add_argument("--max-treedepth", type=int, default=10)
    p.add_argument("--features", type=_features, default=DEFAULT_FEATURES,
                   help="comma-separated predictors (default group,orientation)")
    _add_weights(p)
    p.add_argument("--tau1", type=float, default=0.90)
    p.add_argument("--tau2-min", type=float, default=0.70)
    p.add_argument("--tau2-max", type=float, default=0.85)
    p.add_argument("--reference-class", action="store_true",
                   help="pin level 1's intercept and coefficients to zero")
    p.add_argument("--jobs", type=int, default=1, help="chains to run in parallel processes")
    p.add_argument("--no-draws", action="store_true", help="skip the draws.csv dump")

    p = sub.add_parser("predict", help="P(Level 1) and triage action for one member")
    p.add_argument("--out-dir", required=True, type=Path, help="directory holding fit artifacts")
    p.add_argument("--cycles", required=True, type=int)
    p.add_argument("--orientation", required=True)
    for name in ("density", "moisture", "size", "hardness"):
        p.add_argument(f"--{name}", type=float)

    p = sub.add_parser("grade", help="R and reuse level per specimen at fixed thresholds")
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--out-dir", type=Path)
    _add_weights(p)
    p.add_argument("--tau1", type=float, default=0.90)
    p.add_argument("--tau2", type=float, default=0.75)

    p = sub.add_parser("simulate", help="synthetic specimens calibrated to the published statistics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-per-group", type=int, default=10)
    p.add_argument("--profile", choices=sorted(PROFILES), default="calibrated")
    p.add_argument("--out", type=Path, help="output CSV (default stdout)")

    p = sub.add_parser("report", help="render a fit as text plus plot-data CSVs")
    p.add_argument("--out-dir", required=True, type=Path)
    return parser


def cmd_fit(args) -> int:
    config = workflow.RunConfig(
        input=args.input,
        out_dir=args.out_dir,
        features=args.features,
        weights=_weights(args),
        sampler=SamplerConfig(
            n_chains=args.chains,
            n_warmup=args.warmup,
            n_draws=args.draws,
            target_accept=args.target_accept,
            max_treedepth=args.max_treedepth,
            seed=args.seed,
        ),
        tau1=args.tau1,
        tau2_bounds=(args.tau2_min, args.tau2_max),
        reference_class=args.reference_class,
        write_draws=not args.no_draws,
        n_jobs=args.jobs,
    )
    result = workflow.fit(config)
    workflow.write_fit(result, args.out_dir)
    t = result.report["tau2_posterior"]
    diag = result.report["diagnostics"]
    print(f"tau2 median {t['median']:.3f} (95% HDI {t['hdi_low']:.3f}-{t['hdi_high']:.3f})")
    print(f"wrote {args.out_dir / 'report.json'}")
    if not result.diagnostics_passed:
        print(
            f"diagnostics failed: max R-hat {diag['max_rhat']}, min bulk ESS {diag['min_ess_bulk']},"
            f" divergence rate {diag['divergence_rate']:.3f}",
            file=sys.stderr,
        )
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def cmd_predict(args) -> int:
    extra = {k: getattr(args, k) for k in ("density", "moisture", "size", "hardness") if getattr(args, k) is not None}
    out = workflow.predict(args.out_dir, args.cycles, args.orientation, extra)
    for w in out["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    print(json.dumps(out, indent=2))
    return EXIT_OK


def cmd_grade(args) -> int:
    result = workflow.grade(args.input, _weights(args), Thresholds(args.tau1, args.tau2))
    text = workflow.grade_csv(result)
    sys.stdout.write(text)
    c = result["counts"]
    print(f"# counts L1={c[0]} L2={c[1]} L3={c[2]}", file=sys.stderr)
    if args.out_dir is not None:
        workflow.atomic_write(args.out_dir / "grade.csv", text)
        workflow.atomic_write(args.out_dir / "grade.json", workflow.dumps_report(result))
    return EXIT_OK


def cmd_simulate(args) -> int:
    text = workflow.simulate_csv(args.seed, args.n_per_group, args.profile)
    if args.out is None:
        sys.stdout.write(text)
    else:
        workflow.atomic_write(args.out, text)
    return EXIT_OK


def cmd_report(args) -> int:
    text, plots = workflow.render_report(args.out_dir)
    for name, content in plots.items():
        workflow.atomic_write(args.out_dir / "plots" / name, content)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "grade": cmd_grade,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def _origin(exc: BaseException) -> str:
    tb = traceback.extract_tb(exc.__traceback__)
    return Path(tb[-1].filename).stem if tb else "timber_reuse"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except DiagnosticsError as exc:
        print(f"error ({_origin(exc)}): {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except (TimberReuseError, OSError) as exc:
        print(f"error ({_origin(exc)}): {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"internal error ({_origin(exc)}): {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
