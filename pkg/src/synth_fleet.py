"""Seeded synthetic fleet of overnight residential chargers."""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator

import numpy as np
import pandas as pd

from config_schema import MINUTES_PER_DAY, SynthFleetConfig, check_synth_config
from ingest_flex import MINUTES_PER_HOUR

logger = logging.getLogger(__name__)


def _truncated_minutes(rng: np.random.Generator, mean: float, spread: float, size: int) -> np.ndarray:
    draws = rng.normal(mean, spread, size) if spread > 0 else np.full(size, mean)
    return np.rint(np.clip(draws, mean - 3 * spread, mean + 3 * spread)).astype(np.int64)


def _simulate_ev(cfg: SynthFleetConfig, ev_index: int, seed_seq: np.random.SeedSequence) -> pd.DataFrame:
    rng = np.random.default_rng(seed_seq)
    n_minutes = cfg.n_days * MINUTES_PER_DAY
    capacity = rng.uniform(cfg.battery_min_kwh, cfg.battery_max_kwh)
    charger_kw = float(cfg.charger_levels_kw[rng.integers(len(cfg.charger_levels_kw))])

    # day -1 supplies the sessions already running at minute 0
    days = np.arange(-1, cfg.n_days)
    plugged = rng.random(days.size) < cfg.plug_in_probability
    arrivals = _truncated_minutes(rng, cfg.arrival_mean_min, cfg.arrival_spread_min, days.size)
    departures = _truncated_minutes(rng, cfg.departure_mean_min, cfg.departure_spread_min, days.size)
    needs = capacity * rng.uniform(cfg.energy_need_min_frac, cfg.energy_need_max_frac, days.size)

    power = np.zeros(n_minutes)
    connected = np.zeros(n_minutes, dtype=np.int8)
    for day, is_plugged, arrival, departure, need in zip(days, plugged, arrivals, departures, needs):
        if not is_plugged:
            continue
        start = int(day) * MINUTES_PER_DAY + int(arrival)
        end = (int(day) + 1) * MINUTES_PER_DAY + int(departure)
        charge_end = start + min(math.ceil(need * MINUTES_PER_HOUR / charger_kw), end - start)
        lo, hi = max(start, 0), min(end, n_minutes)
        if lo >= hi:
            continue
        connected[lo:hi] = 1
        power[lo:max(lo, min(charge_end, hi))] = charger_kw

    return pd.DataFrame(
        {
            "ev_id": f"ev{ev_index:04d}",
            "minute": np.arange(n_minutes, dtype=np.int64),
            "power_kw": power,
            "connected": connected,
        }
    )


def generate_synthetic_fleet(cfg: SynthFleetConfig) -> Iterator[pd.DataFrame]:
    """Yield one dense per-minute record table per EV.

    Each EV draws from its own child of the configured seed, so the output is
    identical for a fixed seed whatever order the EVs are consumed in.
    """
    check_synth_config(cfg)
    logger.info("synthesizing %d EV(s) over %d day(s) with seed %d", cfg.n_evs, cfg.n_days, cfg.seed)
    children = np.random.SeedSequence(cfg.seed).spawn(cfg.n_evs)
    for ev_index, child in enumerate(children):
        yield _simulate_ev(cfg, ev_index, child)
