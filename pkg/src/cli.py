"""Command-line entry point for the synth -> estimate -> bid -> validate -> report chain.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import asdict
from pathlib import Path
from typing import Callable

import pandas as pd

from bid_method import FLEXIBILITIES, METHOD_ANALYTICAL, METHOD_SCENARIO, SolverError
from bid_runner import EvaluationError, draw_split
from config_schema import (
    ConfigValidationError,
    PipelineConfig,
    parse_key_value_text,
    validate_pipeline_config,
    with_overrides,
)
from evaluate import (
    inputs_from_fit_table,
    mean_bids_on_price_grid,
    quantile_cv,
    revenue,
    run_experiment,
    summarize_ks,
    summarize_runs,
    summarize_sweep,
    sweep_frame,
    sweep_runs,
    validate_bid_table,
)
from gof import GofError
from ingest_flex import FlexDataError, estimate_hourly_flex
from manifest import (
    ArtifactManifest,
    ManifestError,
    build_manifest,
    check_split_inputs,
    file_digest,
    read_manifest,
)
from reports import (
    plot_bids_per_hour,
    plot_sensitivity,
    plot_tail_fit,
    plot_violation_rates,
    read_csv,
    read_minute_records,
    read_prices,
    write_csv,
    write_json,
    write_minute_records,
)
from synth_fleet import generate_synthetic_fleet
from tail_fit import TailFitError, WeibullParams, empirical_quantile, extract_tail

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

MINUTES_FILE = "minutes.csv"
HOURLY_FILE = "hourly.csv"
FITS_FILE = "fits.csv"
RUN_SUMMARY_FILE = "run_summary.csv"
SWEEP_SUMMARY_FILE = "sweep_summary.csv"

DATA_ERRORS = (
    FlexDataError,
    GofError,
    EvaluationError,
    OSError,
    pd.errors.ParserError,
    pd.errors.EmptyDataError,
)


class _Parser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the config/usage code."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _setup_logger(level: str) -> None:
    handler = logging.StreamHandler()
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    root = logging.getLogger()
    root.handlers[:] = [handler]
    root.setLevel(level)


def load_config(args: argparse.Namespace) -> PipelineConfig:
    """Config file (if any) first, then command-line overrides."""
    payload: dict[str, str] = {}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigValidationError(f"cannot read config file {args.config}: {exc}") from exc
        payload = parse_key_value_text(text)
    return with_overrides(
        validate_pipeline_config(payload),
        given_keys=payload.keys(),
        seed=args.seed,
        eps=args.eps,
        alpha=args.alpha,
        output_dir=args.output_dir,
        n_evs=getattr(args, "evs", None),
        n_days=getattr(args, "days", None),
        n_runs=getattr(args, "runs", None),
    )


def _artifact(config: PipelineConfig, given: str | None, default_name: str) -> Path:
    return Path(given) if given else Path(config.output_dir) / default_name


def _checked_manifest(path: Path, config: PipelineConfig, hourly: Path | None = None) -> ArtifactManifest:
    manifest = read_manifest(path)
    check_split_inputs(manifest, config)
    if hourly is not None and "hourly" in manifest.inputs and manifest.inputs["hourly"] != file_digest(hourly):
        raise ManifestError(f"{path} was produced from different hourly samples than {hourly}")
    return manifest


def cmd_synth(config: PipelineConfig, args: argparse.Namespace) -> None:
    out = _artifact(config, args.out, MINUTES_FILE)
    manifest = build_manifest("synth", config)
    write_minute_records(out, generate_synthetic_fleet(config.synth), manifest)


def cmd_estimate(config: PipelineConfig, args: argparse.Namespace) -> None:
    minutes = _artifact(config, args.minutes, MINUTES_FILE)
    out = _artifact(config, args.out, HOURLY_FILE)
    hourly, summary = estimate_hourly_flex(read_minute_records(minutes))
    manifest = build_manifest("estimate", config, {"minutes": minutes}, **asdict(summary))
    write_csv(out, hourly, manifest)


def cmd_bid(config: PipelineConfig, args: argparse.Namespace) -> None:
    hourly_path = _artifact(config, args.hourly, HOURLY_FILE)
    out_dir = Path(config.output_dir)
    result = run_experiment(
        read_csv(hourly_path),
        n_runs=config.n_runs,
        in_sample_size=config.in_sample_size,
        seed=config.seed,
        eps=config.eps,
        alpha=config.alpha,
        grid=config.gamma_grid,
        methods=(args.method,),
    )
    manifest = build_manifest("bid", config, {"hourly": hourly_path}, method=args.method)
    # timings are kept apart so the bid table stays byte-identical across reruns
    write_csv(out_dir / f"bids_{args.method}.csv", result.bids.drop(columns=["solve_seconds"]), manifest)
    write_csv(
        out_dir / f"timings_{args.method}.csv",
        result.bids[["run", "hour", "method", "solve_seconds"]],
        manifest,
    )
    if args.method == METHOD_ANALYTICAL:
        write_csv(out_dir / FITS_FILE, result.fits, manifest)
        write_csv(out_dir / "ks.csv", result.ks, manifest)
        write_csv(out_dir / "ks_summary.csv", summarize_ks(result.ks), manifest)


def cmd_validate(config: PipelineConfig, args: argparse.Namespace) -> None:
    hourly_path = _artifact(config, args.hourly, HOURLY_FILE)
    out_dir = Path(config.output_dir)
    bid_paths = [Path(p) for p in args.bids] if args.bids else sorted(out_dir.glob("bids_*.csv"))
    if not bid_paths:
        raise EvaluationError(f"no bid files given and none found in {out_dir}")
    for path in bid_paths:
        _checked_manifest(path, config, hourly_path)

    bids = pd.concat([read_csv(path) for path in bid_paths], ignore_index=True)
    if bids.empty:
        raise EvaluationError("bid files contain no rows")
    validations = validate_bid_table(
        read_csv(hourly_path), bids, in_sample_size=config.in_sample_size, seed=config.seed, eps=config.eps
    )
    summary = summarize_runs(bids, validations, n_runs=int(bids["run"].nunique()))

    inputs = {"hourly": hourly_path, **{f"bids_{i}": p for i, p in enumerate(bid_paths)}}
    manifest = build_manifest("validate", config, inputs)
    write_csv(out_dir / "validation.csv", validations, manifest)
    write_json(out_dir / "validation.json", {"reports": validations.to_dict(orient="records")}, manifest)
    write_csv(out_dir / RUN_SUMMARY_FILE, summary.table, manifest)
    write_json(out_dir / "run_summary.json", summary.to_dict(), manifest)


def cmd_sweep(config: PipelineConfig, args: argparse.Namespace) -> None:
    fits_path = _artifact(config, args.fits, FITS_FILE)
    out_dir = Path(config.output_dir)
    _checked_manifest(fits_path, config)
    curves = sweep_runs(inputs_from_fit_table(read_csv(fits_path), config.eps), config.alpha_grid)
    summary = summarize_sweep(curves)

    manifest = build_manifest("sweep", config, {"fits": fits_path})
    write_csv(out_dir / "sweep.csv", sweep_frame(curves), manifest)
    write_csv(out_dir / SWEEP_SUMMARY_FILE, summary, manifest)
    write_json(
        out_dir / "sweep.json",
        {"curves": [curve.to_dict() for curve in curves], "summary": summary.to_dict(orient="records")},
        manifest,
    )


def _tail_overlay(
    config: PipelineConfig,
    args: argparse.Namespace,
    hourly_path: Path,
    fits_path: Path,
    manifest: ArtifactManifest,
) -> None:
    fits = read_csv(fits_path)
    if fits.empty:
        raise EvaluationError(f"{fits_path} has no fits to plot")
    wanted = (fits["run"] == 0) & (fits["hour"] == args.overlay_hour) & (fits["flexibility"] == args.overlay_flex)
    chosen = fits[wanted]
    if chosen.empty:
        chosen = fits.sort_values(["run", "hour", "flexibility"]).head(1)
        logger.warning(
            "no run-0 fit for hour %d %s; plotting run %d hour %d %s instead",
            args.overlay_hour,
            args.overlay_flex,
            int(chosen["run"].iloc[0]),
            int(chosen["hour"].iloc[0]),
            chosen["flexibility"].iloc[0],
        )
    row = chosen.iloc[0]
    run, hour, flexibility = int(row["run"]), int(row["hour"]), str(row["flexibility"])

    hourly = read_csv(hourly_path)
    split = draw_split(
        hourly[hourly["hour"] == hour],
        run=run,
        hour=hour,
        in_sample_size=config.in_sample_size,
        seed=config.seed,
        eps=config.eps,
    )
    samples = split.in_sample.column(flexibility)
    tail = extract_tail(samples, empirical_quantile(samples, config.eps))
    plot_tail_fit(
        tail,
        WeibullParams(float(row["kappa"]), float(row["gamma"])),
        Path(config.output_dir) / "tail_fit.svg",
        manifest,
        title=f"hour {hour}, {flexibility} flexibility, run {run}",
    )


def cmd_report(config: PipelineConfig, args: argparse.Namespace) -> None:
    out_dir = Path(config.output_dir)
    hourly_path = _artifact(config, args.hourly, HOURLY_FILE)
    summary_path = out_dir / RUN_SUMMARY_FILE
    sweep_path = out_dir / SWEEP_SUMMARY_FILE
    fits_path = out_dir / FITS_FILE
    for path in (summary_path, sweep_path, fits_path):
        _checked_manifest(path, config)

    inputs = {"hourly": hourly_path, "summary": summary_path, "sweep": sweep_path, "fits": fits_path}
    payload: dict[str, object] = {}
    if args.prices:
        prices = read_prices(args.prices)
        inputs["prices"] = Path(args.prices)
        revenues: dict[str, float] = {}
        for bid_path in sorted(out_dir.glob("bids_*.csv")):
            _checked_manifest(bid_path, config, hourly_path)
            bids = read_csv(bid_path)
            for method, method_bids in bids.groupby("method", sort=True):
                revenues[str(method)] = revenue(mean_bids_on_price_grid(method_bids, prices), prices)
        for method, total in revenues.items():
            logger.info("revenue %s: %.2f EUR", method, total)
        payload["revenue_eur"] = revenues
    manifest = build_manifest("report", config, inputs)

    summary = read_csv(summary_path)
    sweep = read_csv(sweep_path)
    plot_bids_per_hour(summary, out_dir / "bids_per_hour.svg", manifest)
    plot_violation_rates(summary, out_dir / "violation_rates.svg", manifest, config.eps)
    plot_sensitivity(sweep, out_dir / "sensitivity.svg", manifest)
    _tail_overlay(config, args, hourly_path, fits_path, manifest)

    payload["run_summary"] = summary.to_dict(orient="records")
    payload["sweep_summary"] = sweep.to_dict(orient="records")
    write_json(out_dir / "report.json", payload, manifest)


def cmd_cv(config: PipelineConfig, args: argparse.Namespace) -> None:
    hourly_path = _artifact(config, args.hourly, HOURLY_FILE)
    out_dir = Path(config.output_dir)
    report = quantile_cv(
        read_csv(hourly_path),
        draw_size=config.cv_draw_size,
        n_reps=config.cv_reps,
        eps=config.eps,
        seed=config.seed,
    )
    manifest = build_manifest("cv", config, {"hourly": hourly_path})
    write_csv(out_dir / "cv.csv", report.table, manifest)
    write_json(out_dir / "cv.json", report.to_dict(), manifest)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--eps", type=float, help="joint violation level (default 0.1)")
    common.add_argument("--alpha", type=float, help="per-constraint level (default eps/3)")
    common.add_argument("--output-dir", help="artifact directory (default 'artifacts')")
    common.add_argument(
        "--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"], help="logging verbosity"
    )

    parser = _Parser(prog="ev-fcr-bid", description="EV fleet FCR-D reserve bidding toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", parents=[common], help="generate a synthetic minute-level fleet")
    synth.add_argument("--evs", type=int, help="number of EVs")
    synth.add_argument("--days", type=int, help="number of days")
    synth.add_argument("--out", help="minute CSV to write")
    synth.set_defaults(handler=cmd_synth)

    estimate = sub.add_parser("estimate", parents=[common], help="hourly fleet flexibility from minute records")
    estimate.add_argument("--minutes", help="minute CSV to read")
    estimate.add_argument("--out", help="hourly CSV to write")
    estimate.set_defaults(handler=cmd_estimate)

    bid = sub.add_parser("bid", parents=[common], help="hourly bids over repeated in-sample draws")
    bid.add_argument("--hourly", help="hourly CSV to read")
    bid.add_argument("--method", choices=[METHOD_ANALYTICAL, METHOD_SCENARIO], default=METHOD_ANALYTICAL)
    bid.add_argument("--runs", type=int, help="number of runs")
    bid.set_defaults(handler=cmd_bid)

    validate = sub.add_parser("validate", parents=[common], help="out-of-sample violation counts of stored bids")
    validate.add_argument("--hourly", help="hourly CSV to read")
    validate.add_argument("--bids", nargs="+", help="bid CSVs (default: every bids_*.csv in the output dir)")
    validate.set_defaults(handler=cmd_validate)

    sweep = sub.add_parser("sweep", parents=[common], help="total bid against the per-constraint level")
    sweep.add_argument("--fits", help="fit CSV written by 'bid --method analytical'")
    sweep.set_defaults(handler=cmd_sweep)

    report = sub.add_parser("report", parents=[common], help="figures and the summary report")
    report.add_argument("--hourly", help="hourly CSV to read")
    report.add_argument("--prices", help="price CSV: day,hour,pi_up_eur_per_kw,pi_down_eur_per_kw")
    report.add_argument("--overlay-hour", type=int, default=13, help="hour of the tail-fit overlay")
    report.add_argument("--overlay-flex", choices=list(FLEXIBILITIES), default="down")
    report.set_defaults(handler=cmd_report)

    cv = sub.add_parser("cv", parents=[common], help="resampling spread of the empirical quantile")
    cv.add_argument("--hourly", help="hourly CSV to read")
    cv.set_defaults(handler=cmd_cv)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logger(args.log_level)
    handler: Callable[[PipelineConfig, argparse.Namespace], None] = args.handler
    try:
        config = load_config(args)
        handler(config, args)
    except (ConfigValidationError, ManifestError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (TailFitError, SolverError, FloatingPointError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except DATA_ERRORS as exc:
        logger.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
