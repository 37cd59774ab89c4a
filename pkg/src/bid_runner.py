"""Per-hour in-sample/out-of-sample splits and bidding-method orchestration."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd

from bid_method import BiddingMethod, BidResult, ScenarioSet
from config_schema import GammaGrid
from solvers import method_for

logger = logging.getLogger(__name__)

FLEX_COLUMNS = ["r_up_kw", "r_down_kw", "r_e20_kw"]


class EvaluationError(ValueError):
    """Raised when experiment inputs or reports are inconsistent."""


@dataclass(frozen=True, eq=False)
class HourSplit:
    """One run's seeded partition of an hour's daily samples."""

    run: int
    hour: int
    in_sample_days: np.ndarray = field(repr=False)
    oos_days: np.ndarray = field(repr=False)
    in_sample: ScenarioSet = field(repr=False)
    oos: ScenarioSet | None = field(repr=False)
    split_hash: str = ""


@dataclass(frozen=True)
class HourBid:
    """Outcome of one method on one split."""

    run: int
    hour: int
    split_hash: str
    result: BidResult

    def to_dict(self) -> dict[str, Any]:
        return {"run": self.run, "hour": self.hour, "split_hash": self.split_hash, **self.result.to_dict()}


def draw_split(
    hour_frame: pd.DataFrame,
    *,
    run: int,
    hour: int,
    in_sample_size: int,
    seed: int,
    eps: float,
) -> HourSplit:
    """Draw ``in_sample_size`` days without replacement; the rest is out-of-sample.

    The generator is seeded from ``(seed, run, hour)`` only, so other hours and
    runs never shift this draw.
    """
    ordered = hour_frame.sort_values("day")
    n = len(ordered)
    if not 2 <= in_sample_size < n:
        raise EvaluationError(
            f"hour {hour}: in_sample_size {in_sample_size} needs 2 <= size < {n} available samples"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, run, hour]))
    chosen = np.zeros(n, dtype=bool)
    chosen[rng.choice(n, size=in_sample_size, replace=False)] = True

    days = ordered["day"].to_numpy(dtype=np.int64)
    values = ordered[FLEX_COLUMNS].to_numpy(dtype=float)
    in_days = days[chosen]
    material = {"seed": seed, "run": run, "hour": hour, "in_sample_days": in_days.tolist()}
    return HourSplit(
        run=run,
        hour=hour,
        in_sample_days=in_days,
        oos_days=days[~chosen],
        in_sample=ScenarioSet(values[chosen], eps),
        oos=ScenarioSet(values[~chosen], eps),
        split_hash=_compute_split_hash_from_material(material),
    )


class BidRunner:
    """Runs a bidding method on a split and logs the split it consumed."""

    method: BiddingMethod

    def __init__(self, method: BiddingMethod) -> None:
        self.method = method

    def run(self, *, split: HourSplit, alpha: float) -> HourBid:
        result = self.method.solve(scenarios=split.in_sample, alpha=alpha)
        logger.info(
            "run %d hour %02d method=%s split=%s bid=(up %.3f, down %.3f)%s",
            split.run,
            split.hour,
            self.method.name,
            split.split_hash[:12],
            result.bid.b_up_kw,
            result.bid.b_down_kw,
            "" if result.feasible else " infeasible",
        )
        return HourBid(run=split.run, hour=split.hour, split_hash=split.split_hash, result=result)


def bid_hour(split: HourSplit, method: str, alpha: float, grid: GammaGrid | None = None) -> HourBid:
    """Solve one hour with the named method."""
    return BidRunner(method=method_for(method, grid)).run(split=split, alpha=alpha)


def _compute_split_hash_from_material(material: dict[str, Any]) -> str:
    raw = json.dumps(material, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(raw).hexdigest()
