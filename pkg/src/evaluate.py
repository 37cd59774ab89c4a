"""Out-of-sample validation, the multi-run protocol, revenue and statistics."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from scipy.special import betaincinv

from bid_method import FLEXIBILITIES, METHOD_ANALYTICAL, METHOD_SCENARIO, Bid, ScenarioSet
from bid_runner import FLEX_COLUMNS, BidRunner, EvaluationError, HourSplit, draw_split
from config_schema import GammaGrid
from solvers import LER_SHARE, AnalyticalInputs, TailCap, analytical_bid, method_for
from tail_fit import WeibullParams

logger = logging.getLogger(__name__)

VIOLATION_TOLERANCE_KW = 1e-9
SUMMARY_METRICS = ("b_up_kw", "b_down_kw", "joint_rate")
FIT_COLUMNS = ["run", "hour", "flexibility", "threshold_kw", "kappa", "gamma", "n_tail", "nll", "at_grid_boundary"]
VALIDATION_COLUMNS = [
    "run",
    "hour",
    "method",
    "n_oos",
    "violations_up",
    "violations_down",
    "violations_e20",
    "violations_joint",
    "joint_rate",
]


@dataclass(frozen=True)
class ValidationReport:
    """Out-of-sample violation counts of one bid."""

    n_oos: int
    violations_up: int
    violations_down: int
    violations_e20: int
    violations_joint: int
    joint_rate: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Capacity prices per (day, hour) in EUR per kW per hour."""

    frame: pd.DataFrame = field(repr=False)

    def __post_init__(self) -> None:
        required = {"day", "hour", "pi_up", "pi_down"}
        missing = required - set(self.frame.columns)
        if missing:
            raise EvaluationError(f"price series is missing columns: {', '.join(sorted(missing))}")
        if (self.frame[["pi_up", "pi_down"]] < 0).to_numpy().any():
            raise EvaluationError("prices must be nonnegative")
        if self.frame.duplicated(["day", "hour"]).any():
            raise EvaluationError("price series has duplicate (day, hour) rows")


@dataclass(frozen=True, eq=False)
class RunSummary:
    """Mean, sample standard deviation and cv per (method, hour) across runs."""

    n_runs: int
    table: pd.DataFrame = field(repr=False)

    def to_dict(self) -> dict[str, Any]:
        records = self.table.astype(object).where(self.table.notna(), None).to_dict(orient="records")
        return {"n_runs": self.n_runs, "hours": records}


@dataclass(frozen=True, eq=False)
class CvReport:
    """Spread of the empirical eps-quantile over without-replacement draws."""

    draw_size: int
    n_reps: int
    table: pd.DataFrame = field(repr=False)

    def to_dict(self) -> dict[str, Any]:
        records = self.table.astype(object).where(self.table.notna(), None).to_dict(orient="records")
        return {"draw_size": self.draw_size, "n_reps": self.n_reps, "rows": records}


@dataclass(frozen=True)
class SensitivityPoint:
    alpha: float
    total_bid_kw: float
    down_share: float
    feasible: dict[int, bool]


@dataclass(frozen=True)
class SensitivityCurve:
    """Total daily bid as a function of the per-constraint level alpha."""

    run: int
    points: tuple[SensitivityPoint, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "run": self.run,
            "points": [
                {
                    "alpha": p.alpha,
                    "total_bid_kw": p.total_bid_kw,
                    "down_share": None if math.isnan(p.down_share) else p.down_share,
                    "feasible_hours": sorted(h for h, ok in p.feasible.items() if ok),
                }
                for p in self.points
            ],
        }


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    """Everything one multi-run experiment produced."""

    summary: RunSummary
    bids: pd.DataFrame = field(repr=False)
    validations: pd.DataFrame = field(repr=False)
    fits: pd.DataFrame = field(repr=False)
    ks: pd.DataFrame = field(repr=False)
    inputs: dict[tuple[int, int], AnalyticalInputs] = field(default_factory=dict, repr=False)


def count_violations(bid: Bid, oos: ScenarioSet) -> ValidationReport:
    """Count per-constraint and joint violations; a scenario counts once jointly."""
    n = len(oos)
    up = LER_SHARE * bid.b_down_kw + bid.b_up_kw > oos.r_up + VIOLATION_TOLERANCE_KW
    down = bid.b_down_kw > oos.r_down + VIOLATION_TOLERANCE_KW
    e20 = bid.b_down_kw > oos.r_e20 + VIOLATION_TOLERANCE_KW
    joint = int((up | down | e20).sum())
    return ValidationReport(
        n_oos=n,
        violations_up=int(up.sum()),
        violations_down=int(down.sum()),
        violations_e20=int(e20.sum()),
        violations_joint=joint,
        joint_rate=joint / n,
    )


def validate_bid_table(
    hourly: pd.DataFrame,
    bids: pd.DataFrame,
    *,
    in_sample_size: int,
    seed: int,
    eps: float,
) -> pd.DataFrame:
    """Recount out-of-sample violations of stored bids on their redrawn splits."""
    missing = {"run", "hour", "method", "b_up_kw", "b_down_kw"} - set(bids.columns)
    if missing:
        raise EvaluationError(f"bids are missing columns: {', '.join(sorted(missing))}")
    frames = dict(_hour_frames(hourly))
    splits: dict[tuple[int, int], HourSplit] = {}
    rows: list[dict[str, Any]] = []
    for row in bids.itertuples(index=False):
        run, hour = int(row.run), int(row.hour)
        if hour not in frames:
            raise EvaluationError(f"bids reference hour {hour}, which has no hourly samples")
        if (run, hour) not in splits:
            splits[(run, hour)] = draw_split(
                frames[hour], run=run, hour=hour, in_sample_size=in_sample_size, seed=seed, eps=eps
            )
        split = splits[(run, hour)]
        stored_hash = getattr(row, "split_hash", None)
        if stored_hash is not None and stored_hash != split.split_hash:
            raise EvaluationError(f"run {run} hour {hour}: bid was computed on a different split")
        report = count_violations(Bid(float(row.b_up_kw), float(row.b_down_kw)), split.oos)
        rows.append({"run": run, "hour": hour, "method": row.method, **report.to_dict()})
    return pd.DataFrame(rows, columns=VALIDATION_COLUMNS)


def mean_bids_on_price_grid(bids: pd.DataFrame, prices: PriceSeries) -> pd.DataFrame:
    """Repeat each hour's run-mean bid on every day of the price series."""
    means = bids.groupby("hour", sort=True)[["b_up_kw", "b_down_kw"]].mean().reset_index()
    unpriced = sorted(set(means["hour"].astype(int)) - set(prices.frame["hour"].astype(int)))
    if unpriced:
        raise EvaluationError(f"bid hour(s) without price rows: {', '.join(str(h) for h in unpriced)}")
    grid = prices.frame[["day", "hour"]].merge(means, on="hour", how="left")
    unbid = sorted(grid.loc[grid["b_up_kw"].isna(), "hour"].unique())
    if unbid:
        raise EvaluationError(f"prices cover hour(s) without bids: {', '.join(str(h) for h in unbid)}")
    return grid


def revenue(bids: pd.DataFrame, prices: PriceSeries) -> float:
    """Capacity revenue ``sum_h b_up * pi_up + b_down * pi_down``."""
    keys = ["day", "hour"]
    merged = bids[keys + ["b_up_kw", "b_down_kw"]].merge(
        prices.frame[keys + ["pi_up", "pi_down"]], on=keys, how="outer", indicator=True
    )
    mismatched = merged[merged["_merge"] != "both"]
    if not mismatched.empty:
        offending = ", ".join(f"({d}, {h})" for d, h in mismatched[keys].head(10).itertuples(index=False))
        raise EvaluationError(f"bids and prices are not on the same grid; offending keys: {offending}")
    return float((merged["b_up_kw"] * merged["pi_up"] + merged["b_down_kw"] * merged["pi_down"]).sum())


def t_quantile(tail_prob: float, df: float) -> float:
    """Student-t quantile with upper tail probability ``tail_prob``."""
    if df < 1:
        raise EvaluationError("degrees of freedom must be >= 1")
    if not 0.0 < tail_prob < 1.0:
        raise EvaluationError("tail_prob must be between 0 and 1 (exclusive)")
    if tail_prob == 0.5:
        return 0.0
    two_sided = 2.0 * min(tail_prob, 1.0 - tail_prob)
    x = float(betaincinv(df / 2.0, 0.5, two_sided))
    magnitude = math.sqrt(df * (1.0 - x) / x)
    return magnitude if tail_prob < 0.5 else -magnitude


def confidence_interval(samples: Sequence[float], level: float = 0.95) -> tuple[float, float]:
    """t-based interval for the mean with the n-1 sample standard deviation."""
    values = np.asarray(samples, dtype=float)
    if values.size < 2:
        raise EvaluationError("a confidence interval needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise EvaluationError("level must be between 0 and 1 (exclusive)")
    mean = float(values.mean())
    sd = float(values.std(ddof=1))
    half = t_quantile((1.0 - level) / 2.0, values.size - 1) * sd / math.sqrt(values.size)
    return mean - half, mean + half


def _hour_frames(hourly: pd.DataFrame) -> Iterable[tuple[int, pd.DataFrame]]:
    missing = {"day", "hour", *FLEX_COLUMNS} - set(hourly.columns)
    if missing:
        raise EvaluationError(f"hourly samples are missing columns: {', '.join(sorted(missing))}")
    for hour, frame in hourly.groupby("hour", sort=True):
        yield int(hour), frame


def summarize_runs(bids: pd.DataFrame, validations: pd.DataFrame, n_runs: int) -> RunSummary:
    merged = bids.merge(validations[["run", "hour", "method", "joint_rate"]], on=["run", "hour", "method"])
    grouped = merged.groupby(["method", "hour"], sort=True)[list(SUMMARY_METRICS)]
    table = grouped.agg(["mean", "std"])
    table.columns = [f"{metric}_{stat.replace('std', 'sd')}" for metric, stat in table.columns]
    for metric in SUMMARY_METRICS:
        mean = table[f"{metric}_mean"]
        # undefined for a zero mean
        cv = table[f"{metric}_sd"] / mean.where(mean != 0.0)
        table.insert(table.columns.get_loc(f"{metric}_sd") + 1, f"{metric}_cv", cv)
    return RunSummary(n_runs=n_runs, table=table.reset_index())


def run_experiment(
    hourly: pd.DataFrame,
    *,
    n_runs: int,
    in_sample_size: int,
    seed: int,
    eps: float = 0.1,
    alpha: float | None = None,
    grid: GammaGrid | None = None,
    methods: Sequence[str] = (METHOD_ANALYTICAL, METHOD_SCENARIO),
) -> ExperimentResult:
    """Repeat split, fit, solve and validate ``n_runs`` times for every hour."""
    if n_runs < 1:
        raise EvaluationError("n_runs must be >= 1")
    alpha = eps / 3 if alpha is None else alpha
    runners = {name: BidRunner(method=method_for(name, grid)) for name in methods}

    bid_rows: list[dict[str, Any]] = []
    validation_rows: list[dict[str, Any]] = []
    fit_rows: list[dict[str, Any]] = []
    ks_rows: list[dict[str, Any]] = []
    inputs: dict[tuple[int, int], AnalyticalInputs] = {}

    for hour, frame in _hour_frames(hourly):
        for run in range(n_runs):
            split = draw_split(frame, run=run, hour=hour, in_sample_size=in_sample_size, seed=seed, eps=eps)
            for name, runner in runners.items():
                outcome = runner.run(split=split, alpha=alpha).result
                report = count_violations(outcome.bid, split.oos)
                bid_rows.append(
                    {
                        "run": run,
                        "hour": hour,
                        "method": name,
                        "alpha": alpha,
                        **outcome.bid.to_dict(),
                        "feasible": outcome.feasible,
                        "solve_seconds": outcome.solve_seconds,
                        "split_hash": split.split_hash,
                    }
                )
                validation_rows.append({"run": run, "hour": hour, "method": name, **report.to_dict()})
                if name != METHOD_ANALYTICAL:
                    continue
                inputs[(run, hour)] = AnalyticalInputs.from_fits(outcome.fits, eps)
                for flexibility in FLEXIBILITIES:
                    fit = outcome.fits.get(flexibility)
                    ks = outcome.ks.get(flexibility)
                    if fit is None:
                        continue
                    fit_rows.append({"run": run, "hour": hour, "flexibility": flexibility, **fit.to_dict()})
                    ks_rows.append({"run": run, "hour": hour, "flexibility": flexibility, **ks.to_dict()})
        logger.info("hour %02d: %d run(s) done", hour, n_runs)

    bids = pd.DataFrame(bid_rows)
    validations = pd.DataFrame(validation_rows, columns=VALIDATION_COLUMNS)
    return ExperimentResult(
        summary=summarize_runs(bids, validations, n_runs),
        bids=bids,
        validations=validations,
        fits=pd.DataFrame(fit_rows, columns=FIT_COLUMNS),
        ks=pd.DataFrame(ks_rows, columns=["run", "hour", "flexibility", "d_n", "p_value", "n"]),
        inputs=inputs,
    )


def summarize_ks(ks: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation of the KS results per (hour, flexibility)."""
    grouped = ks.groupby(["hour", "flexibility"], sort=True)
    table = grouped.agg(
        d_n_mean=("d_n", "mean"),
        d_n_sd=("d_n", "std"),
        p_mean=("p_value", "mean"),
        p_sd=("p_value", "std"),
    )
    return table.reset_index()


def quantile_cv(
    hourly: pd.DataFrame,
    *,
    draw_size: int = 216,
    n_reps: int = 5000,
    eps: float = 0.1,
    seed: int = 0,
) -> CvReport:
    """Coefficient of variation of the empirical eps-quantile under resampling."""
    if not 0.0 < eps < 1.0:
        raise EvaluationError("eps must be between 0 and 1 (exclusive)")
    rows: list[dict[str, Any]] = []
    for hour, frame in _hour_frames(hourly):
        for index, (flexibility, column) in enumerate(zip(FLEXIBILITIES, FLEX_COLUMNS)):
            pool = np.sort(frame[column].to_numpy(dtype=float))
            if draw_size > pool.size:
                raise EvaluationError(f"hour {hour}: draw_size {draw_size} exceeds pool of {pool.size}")
            rng = np.random.default_rng(np.random.SeedSequence([seed, hour, index]))
            draws = rng.permuted(np.tile(np.arange(pool.size), (n_reps, 1)), axis=1)[:, :draw_size]
            quantiles = np.quantile(pool[draws], eps, axis=1, method="linear")
            mean = float(quantiles.mean())
            sd = float(quantiles.std(ddof=1)) if n_reps > 1 else 0.0
            defined = mean != 0.0
            if not defined:
                logger.warning("hour %02d %s: quantile mean is 0; cv undefined", hour, flexibility)
            rows.append(
                {
                    "hour": hour,
                    "flexibility": flexibility,
                    "mean": mean,
                    "sd": sd,
                    "cv": sd / mean if defined else float("nan"),
                }
            )
    return CvReport(draw_size=draw_size, n_reps=n_reps, table=pd.DataFrame(rows))


def sensitivity_sweep(
    inputs_by_hour: Mapping[int, AnalyticalInputs],
    alpha_grid: Sequence[float],
    *,
    run: int = 0,
) -> SensitivityCurve:
    """Recompute every hour's analytical bid for each alpha and total them."""
    points: list[SensitivityPoint] = []
    for alpha in alpha_grid:
        total_up = total_down = 0.0
        feasible: dict[int, bool] = {}
        for hour, inputs in sorted(inputs_by_hour.items()):
            if not 0.0 < alpha <= inputs.eps:
                raise EvaluationError(f"alpha {alpha} outside (0, {inputs.eps}]")
            bid, ok = analytical_bid(inputs, alpha)
            total_up += bid.b_up_kw
            total_down += bid.b_down_kw
            feasible[hour] = ok
        total = total_up + total_down
        points.append(
            SensitivityPoint(
                alpha=float(alpha),
                total_bid_kw=total,
                down_share=total_down / total if total > 0 else float("nan"),
                feasible=feasible,
            )
        )
    return SensitivityCurve(run=run, points=tuple(points))


def sweep_runs(
    inputs: Mapping[tuple[int, int], AnalyticalInputs], alpha_grid: Sequence[float]
) -> list[SensitivityCurve]:
    """One sensitivity curve per run from per-(run, hour) analytical inputs."""
    if not inputs:
        raise EvaluationError("no analytical inputs to sweep")
    runs = sorted({run for run, _ in inputs})
    return [
        sensitivity_sweep(
            {hour: hour_inputs for (r, hour), hour_inputs in inputs.items() if r == run},
            alpha_grid,
            run=run,
        )
        for run in runs
    ]


def sweep_experiment(result: ExperimentResult, alpha_grid: Sequence[float]) -> list[SensitivityCurve]:
    return sweep_runs(result.inputs, alpha_grid)


def inputs_from_fit_table(fits: pd.DataFrame, eps: float) -> dict[tuple[int, int], AnalyticalInputs]:
    """Rebuild per-(run, hour) analytical inputs from a stored fit table."""
    missing = {"run", "hour", "flexibility", "threshold_kw", "kappa", "gamma"} - set(fits.columns)
    if missing:
        raise EvaluationError(f"fit table is missing columns: {', '.join(sorted(missing))}")
    caps: dict[tuple[int, int], dict[str, TailCap]] = {}
    for row in fits.itertuples(index=False):
        if row.flexibility not in FLEXIBILITIES:
            raise EvaluationError(f"unknown flexibility {row.flexibility!r} in fit table")
        caps.setdefault((int(row.run), int(row.hour)), {})[row.flexibility] = TailCap(
            float(row.threshold_kw), WeibullParams(float(row.kappa), float(row.gamma))
        )
    return {
        key: AnalyticalInputs(up=c.get("up"), down=c.get("down"), e20=c.get("e20"), eps=eps)
        for key, c in sorted(caps.items())
    }


def sweep_frame(curves: Sequence[SensitivityCurve]) -> pd.DataFrame:
    """Flat table of every run's sweep points."""
    rows = [
        {
            "run": curve.run,
            "alpha": point.alpha,
            "total_bid_kw": point.total_bid_kw,
            "down_share": point.down_share,
            "n_feasible_hours": sum(point.feasible.values()),
        }
        for curve in curves
        for point in curve.points
    ]
    return pd.DataFrame(rows, columns=["run", "alpha", "total_bid_kw", "down_share", "n_feasible_hours"])


def summarize_sweep(curves: Sequence[SensitivityCurve], level: float = 0.95) -> pd.DataFrame:
    """Mean total bid per alpha with a t-interval across runs."""
    frame = sweep_frame(curves)
    summary_rows = []
    for alpha, group in frame.groupby("alpha", sort=False):
        totals = group["total_bid_kw"].to_numpy()
        lo, hi = confidence_interval(totals, level) if totals.size >= 2 else (float("nan"), float("nan"))
        summary_rows.append(
            {
                "alpha": alpha,
                "total_mean_kw": float(totals.mean()),
                "ci_lo_kw": lo,
                "ci_hi_kw": hi,
                "down_share_mean": float(group["down_share"].mean()),
                "n_feasible_hours_mean": float(group["n_feasible_hours"].mean()),
            }
        )
    return pd.DataFrame(summary_rows)
