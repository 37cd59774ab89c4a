"""Shared test helpers for the bidding pipeline tests."""

from __future__ import annotations

from itertools import combinations

import numpy as np
import pandas as pd

from bid_method import Bid
from config_schema import SynthFleetConfig

LER_SHARE = 0.2


def ev_records(power: list[float], connected: list[int], ev_id: str = "ev0000", start: int = 0) -> pd.DataFrame:
    """Dense minute records of one EV starting at ``start``."""
    return pd.DataFrame(
        {
            "ev_id": ev_id,
            "minute": np.arange(start, start + len(power), dtype=np.int64),
            "power_kw": np.asarray(power, dtype=float),
            "connected": np.asarray(connected, dtype=bool),
        }
    )


def weibull_sample(rng: np.random.Generator, kappa: float, gamma: float, size: int) -> np.ndarray:
    """Inverse-CDF draws from ``1 - exp(-kappa * x**gamma)``."""
    return (-np.log(rng.random(size)) / kappa) ** (1.0 / gamma)


def hourly_frame(n_days: int = 366, hours: tuple[int, ...] = (0,), seed: int = 0) -> pd.DataFrame:
    """Stationary synthetic hourly flexibility samples."""
    rng = np.random.default_rng(seed)
    rows = []
    for hour in hours:
        for day in range(n_days):
            rows.append(
                {
                    "day": day,
                    "hour": hour,
                    "r_up_kw": 100.0 + 20.0 * rng.standard_normal() + 5.0 * hour,
                    "r_down_kw": 300.0 + 40.0 * rng.standard_normal(),
                    "r_e20_kw": 400.0 + 50.0 * rng.standard_normal(),
                }
            )
    frame = pd.DataFrame(rows)
    flex = ["r_up_kw", "r_down_kw", "r_e20_kw"]
    frame[flex] = frame[flex].clip(lower=0.0)
    return frame


def scenario_objective(up: float, down: float) -> float:
    """Optimum of max b_up + b_down s.t. 0.2 b_down + b_up <= up, b_down <= down."""
    return up + (1.0 - LER_SHARE) * min(down, up / LER_SHARE)


def big_m_satisfied(bid: Bid, values: np.ndarray, relaxed: set[int], big_m: tuple[float, float, float]) -> bool:
    """Check the indicator formulation: relaxed rows get their M added."""
    lhs_up = LER_SHARE * bid.b_down_kw + bid.b_up_kw
    for i, (r_up, r_down, r_e20) in enumerate(values):
        z = 1.0 if i in relaxed else 0.0
        if lhs_up > r_up + big_m[0] * z + 1e-9:
            return False
        if bid.b_down_kw > r_down + big_m[1] * z + 1e-9 or bid.b_down_kw > r_e20 + big_m[2] * z + 1e-9:
            return False
    return True


def brute_force_scenario(values: np.ndarray, budget: int) -> tuple[float, Bid, set[int]]:
    """Best objective over every relaxed subset of size <= budget."""
    n = values.shape[0]
    down = np.minimum(values[:, 1], values[:, 2])
    best: tuple[float, Bid, set[int]] | None = None
    for size in range(budget + 1):
        for relaxed in combinations(range(n), size):
            kept = [i for i in range(n) if i not in relaxed]
            if not kept:
                continue
            up_cap = float(values[kept, 0].min())
            down_cap = float(down[kept].min())
            b_down = min(down_cap, up_cap / LER_SHARE)
            bid = Bid(max(up_cap - LER_SHARE * b_down, 0.0), max(b_down, 0.0))
            objective = scenario_objective(up_cap, down_cap)
            if best is None or objective > best[0]:
                best = (objective, bid, set(relaxed))
    assert best is not None
    return best


def small_synth_config(**overrides: object) -> SynthFleetConfig:
    params = {"n_evs": 4, "n_days": 3, "seed": 11}
    params.update(overrides)
    return SynthFleetConfig(**params)
