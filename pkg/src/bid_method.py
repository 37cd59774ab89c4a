"""Interfaces and shared types for pluggable bidding methods."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np

from gof import KsResult
from tail_fit import WeibullTailFit


METHOD_ANALYTICAL = "analytical"
METHOD_SCENARIO = "scenario"
FLEXIBILITIES = ("up", "down", "e20")


class SolverError(ValueError):
    """Raised when a bid problem is malformed or numerically unsolvable."""


@dataclass(frozen=True)
class Bid:
    """Hourly FCR-D up and down capacity bid in kW."""

    b_up_kw: float
    b_down_kw: float

    def __post_init__(self) -> None:
        if self.b_up_kw < 0 or self.b_down_kw < 0:
            raise SolverError(f"bids must be nonnegative, got ({self.b_up_kw}, {self.b_down_kw})")

    @property
    def total_kw(self) -> float:
        return self.b_up_kw + self.b_down_kw

    def to_dict(self) -> dict[str, float]:
        return {"b_up_kw": self.b_up_kw, "b_down_kw": self.b_down_kw}


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Realizations ``(r_up, r_down, r_e20)`` in kW, one row per scenario."""

    values: np.ndarray = field(repr=False)
    eps: float = 0.1

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] != 3 or values.shape[0] == 0:
            raise SolverError("scenarios must be a non-empty (n, 3) array")
        if np.any(~np.isfinite(values)) or np.any(values < 0):
            raise SolverError("scenario realizations must be finite and nonnegative")
        if not 0.0 < self.eps < 1.0:
            raise SolverError("eps must be between 0 and 1 (exclusive)")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def r_up(self) -> np.ndarray:
        return self.values[:, 0]

    @property
    def r_down(self) -> np.ndarray:
        return self.values[:, 1]

    @property
    def r_e20(self) -> np.ndarray:
        return self.values[:, 2]

    def column(self, flexibility: str) -> np.ndarray:
        return self.values[:, FLEXIBILITIES.index(flexibility)]


@dataclass(frozen=True)
class BidResult:
    """Result envelope emitted by a bidding method for one hour."""

    method: str
    bid: Bid
    feasible: bool
    alpha: float
    solve_seconds: float
    fits: dict[str, WeibullTailFit | None] = field(default_factory=dict)
    tails: dict[str, np.ndarray] = field(default_factory=dict, repr=False)
    ks: dict[str, KsResult | None] = field(default_factory=dict)
    violation_set: tuple[int, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            **self.bid.to_dict(),
            "feasible": self.feasible,
            "alpha": self.alpha,
            "fits": {k: (v.to_dict() if v else None) for k, v in self.fits.items()},
            "ks": {k: (v.to_dict() if v else None) for k, v in self.ks.items()},
            "violation_set": list(self.violation_set),
        }


class BiddingMethod(Protocol):
    """Contract for hourly bid computation from in-sample scenarios."""

    name: str

    def solve(self, *, scenarios: ScenarioSet, alpha: float) -> BidResult:
        """Compute the hour's bid from its in-sample realizations."""
