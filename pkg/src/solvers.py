"""Hourly reserve bids: Bonferroni/Weibull closed form and exact scenario optimum.

Both methods maximize ``b_up + b_down`` subject to the LER coupling
``0.2 b_down + b_up <= r_up`` and ``b_down <= min(r_down, r_e20)``. The
analytical method replaces the realizations by Weibull tail caps at level
alpha per constraint; the scenario method enforces them on every in-sample
realization except a budget of ``floor(n * eps)`` dropped ones.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from bid_method import (
    FLEXIBILITIES,
    METHOD_ANALYTICAL,
    METHOD_SCENARIO,
    Bid,
    BiddingMethod,
    BidResult,
    ScenarioSet,
    SolverError,
)
from config_schema import GammaGrid
from gof import ks_test_fit
from tail_fit import TailFitError, WeibullParams, WeibullTailFit, fit_tail

logger = logging.getLogger(__name__)

LER_SHARE = 0.2
DOWN_PER_UP = 1.0 / LER_SHARE
TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class TailCap:
    """Threshold and Weibull tail of one flexibility."""

    threshold_kw: float
    params: WeibullParams


@dataclass(frozen=True)
class AnalyticalInputs:
    """Tail models per flexibility; ``None`` marks a flexibility without a fit."""

    up: TailCap | None
    down: TailCap | None
    e20: TailCap | None
    eps: float = 0.1

    @classmethod
    def from_fits(cls, fits: dict[str, WeibullTailFit | None], eps: float) -> AnalyticalInputs:
        caps = {
            name: TailCap(fit.threshold_kw, fit.params) if fit is not None else None
            for name, fit in ((f, fits.get(f)) for f in FLEXIBILITIES)
        }
        return cls(up=caps["up"], down=caps["down"], e20=caps["e20"], eps=eps)


@dataclass(frozen=True)
class ScenarioSolution:
    """Optimal bid of the scenario problem and the relaxed scenarios."""

    bid: Bid
    violation_set: tuple[int, ...]
    objective: float


def required_sample_size(eps: float, delta: float, p: int) -> int:
    """Smallest sample count meeting the scenario-approach bound for p variables."""
    if not (0.0 < eps < 1.0 and 0.0 < delta <= 1.0):
        raise SolverError("eps must lie in (0, 1) and delta in (0, 1]")
    if p < 1:
        raise SolverError("p must be a positive integer")
    bound = (2.0 / eps) * math.log(1.0 / delta) + 2 * p + (2.0 * p / eps) * math.log(2.0 / eps)
    return math.ceil(bound - 1e-9)


def bid_cap(r_eps: float, kappa: float, gamma: float, alpha: float, eps: float) -> float:
    """Largest bid whose tail probability of shortfall is alpha."""
    if not (kappa > 0 and gamma > 0):
        raise SolverError("kappa and gamma must be positive")
    if not 0.0 < alpha <= eps:
        raise SolverError(f"alpha must satisfy 0 < alpha <= eps, got alpha={alpha}, eps={eps}")
    return r_eps - (-math.log(alpha / eps) / kappa) ** (1.0 / gamma)


def _cap(model: TailCap | None, alpha: float, eps: float) -> float:
    if model is None:
        return 0.0
    return bid_cap(model.threshold_kw, model.params.kappa, model.params.gamma, alpha, eps)


def analytical_bid(inputs: AnalyticalInputs, alpha: float | None = None) -> tuple[Bid, bool]:
    """Closed-form optimum of the Bonferroni-corrected two-variable LP.

    Returns the bid and whether a nonzero bid was possible.
    """
    alpha = inputs.eps / 3 if alpha is None else alpha
    up_cap = _cap(inputs.up, alpha, inputs.eps)
    down_cap = min(_cap(inputs.down, alpha, inputs.eps), _cap(inputs.e20, alpha, inputs.eps))

    if up_cap <= 0:
        # the coupling 0.2 b_down + b_up <= up_cap admits no positive bid
        return Bid(0.0, 0.0), False
    b_down = max(0.0, min(down_cap, DOWN_PER_UP * up_cap))
    b_up = max(0.0, up_cap - LER_SHARE * b_down)
    return Bid(b_up, b_down), True


def violation_budget(n: int, eps: float) -> int:
    return math.floor(n * eps + 1e-9)


def big_m_constants(scenarios: ScenarioSet) -> tuple[float, float, float]:
    """Per-constraint big-M values large enough to relax any scenario."""
    return tuple(float(v) for v in scenarios.values.max(axis=0))


def _better(objective: float, b_down: float, best: ScenarioSolution | None) -> bool:
    if best is None:
        return True
    if objective > best.objective + TIE_TOLERANCE:
        return True
    return abs(objective - best.objective) <= TIE_TOLERANCE and b_down > best.bid.b_down_kw + TIE_TOLERANCE


def scenario_bid(scenarios: ScenarioSet) -> ScenarioSolution:
    """Exact optimum of the sample-based problem with a violation budget.

    For every candidate down level c, scenarios whose down limit is below c
    must be relaxed; the rest of the budget relaxes the smallest up limits.
    """
    n = len(scenarios)
    budget = violation_budget(n, scenarios.eps)
    if budget >= n:
        raise SolverError(f"violation budget {budget} relaxes all {n} scenarios; problem is unbounded")

    up = scenarios.r_up
    down = np.minimum(scenarios.r_down, scenarios.r_e20)
    by_up = np.argsort(up, kind="stable")

    best: ScenarioSolution | None = None
    for candidate in np.unique(np.append(down, 0.0)):
        forced = down < candidate
        n_forced = int(forced.sum())
        if n_forced > budget:
            break
        remaining = by_up[~forced[by_up]]
        removed = remaining[: budget - n_forced]
        kept = remaining[budget - n_forced:]

        up_cap = float(up[kept].min())
        down_cap = float(down[kept].min())
        b_down = min(down_cap, DOWN_PER_UP * up_cap)
        b_up = up_cap - LER_SHARE * b_down
        objective = b_up + b_down
        if _better(objective, b_down, best):
            relaxed = np.concatenate((np.flatnonzero(forced), removed))
            best = ScenarioSolution(
                bid=Bid(max(b_up, 0.0), max(b_down, 0.0)),
                violation_set=tuple(sorted(int(i) for i in relaxed)),
                objective=objective,
            )

    assert best is not None  # candidate 0 never forces a relaxation
    return best


class AnalyticalMethod(BiddingMethod):
    """Weibull tail fits per flexibility feeding the closed-form bid."""

    name = METHOD_ANALYTICAL

    def __init__(self, grid: GammaGrid | None = None) -> None:
        self.grid = grid or GammaGrid()

    def solve(self, *, scenarios: ScenarioSet, alpha: float) -> BidResult:
        fits: dict[str, WeibullTailFit | None] = {}
        tails: dict[str, np.ndarray] = {}
        for flexibility in FLEXIBILITIES:
            try:
                fit, tail = fit_tail(scenarios.column(flexibility), scenarios.eps, self.grid)
            except TailFitError as exc:
                logger.warning("no %s tail fit: %s; bidding 0 on that constraint", flexibility, exc)
                fits[flexibility] = None
                continue
            fits[flexibility] = fit
            tails[flexibility] = tail

        ks = {f: (ks_test_fit(fit, tails[f]) if fit is not None else None) for f, fit in fits.items()}

        started = time.perf_counter()
        bid, feasible = analytical_bid(AnalyticalInputs.from_fits(fits, scenarios.eps), alpha)
        elapsed = time.perf_counter() - started
        return BidResult(
            method=self.name,
            bid=bid,
            feasible=feasible,
            alpha=alpha,
            solve_seconds=elapsed,
            fits=fits,
            tails=tails,
            ks=ks,
        )


class ScenarioMethod(BiddingMethod):
    """Exact combinatorial solution of the big-M sample formulation."""

    name = METHOD_SCENARIO

    def solve(self, *, scenarios: ScenarioSet, alpha: float) -> BidResult:
        started = time.perf_counter()
        solution = scenario_bid(scenarios)
        elapsed = time.perf_counter() - started
        return BidResult(
            method=self.name,
            bid=solution.bid,
            feasible=solution.bid.total_kw > 0,
            alpha=alpha,
            solve_seconds=elapsed,
            violation_set=solution.violation_set,
        )


def method_for(name: str, grid: GammaGrid | None = None) -> BiddingMethod:
    if name == METHOD_ANALYTICAL:
        return AnalyticalMethod(grid)
    if name == METHOD_SCENARIO:
        return ScenarioMethod()
    raise SolverError(f"unknown bidding method {name!r}")
