"""Per-minute charging data to hourly fleet flexibility samples.

Sessions are maximal runs of connected minutes. The battery capacity of an EV
is the largest energy delivered in any of its sessions and the state of charge
is reconstructed backwards from the assumption that every session ends full.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Iterator
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

MINUTES_PER_HOUR = 60
HOURS_PER_DAY = 24
LOOKAHEAD_MINUTES = 20
RECORD_COLUMNS = ("ev_id", "minute", "power_kw", "connected")
HOURLY_COLUMNS = ("day", "hour", "r_up_kw", "r_down_kw", "r_e20_kw")


class FlexDataError(ValueError):
    """Raised when charging records cannot be turned into flexibility samples."""


@dataclass(frozen=True)
class MinuteRecord:
    """Power and connection state of one EV at one minute."""

    ev_id: str
    minute: int
    power_kw: float
    connected: bool


@dataclass(frozen=True)
class ChargingSession:
    """One connection interval ``[start_minute, end_minute)``."""

    ev_id: str
    start_minute: int
    end_minute: int
    session_energy_kwh: float


@dataclass(frozen=True)
class EvProfile:
    """Estimated battery and charger limits plus the reconstructed SoC."""

    ev_id: str
    battery_capacity_kwh: float
    charger_max_kw: float
    start_minute: int
    soc_kwh_series: np.ndarray = field(repr=False)
    usable: bool = True


@dataclass(frozen=True)
class MinuteFlex:
    """Per-minute up, down and 20-minute energy flexibility on a minute grid."""

    start_minute: int
    r_up: np.ndarray = field(repr=False)
    r_down: np.ndarray = field(repr=False)
    r_e20: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class HourlyFlexSample:
    """Minimum fleet flexibility over one hour of one day."""

    day: int
    hour: int
    r_up_kw: float
    r_down_kw: float
    r_e20_kw: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class EstimateSummary:
    """Bookkeeping of one estimation pass."""

    n_rows: int
    n_rejected_rows: int
    n_evs: int
    n_unusable_evs: int
    n_hours: int
    n_dropped_hours: int


def records_to_frame(records: Iterable[MinuteRecord]) -> pd.DataFrame:
    """Collect MinuteRecord objects into the tabular record layout."""
    frame = pd.DataFrame([asdict(record) for record in records], columns=list(RECORD_COLUMNS))
    return frame.astype({"minute": "int64", "power_kw": "float64", "connected": "bool"})


def clean_records(frame: pd.DataFrame) -> tuple[pd.DataFrame, int]:
    """Drop rows that break the record invariants and return the reject count."""
    missing = [column for column in RECORD_COLUMNS if column not in frame.columns]
    if missing:
        raise FlexDataError(f"missing record columns: {', '.join(missing)}")

    minute = pd.to_numeric(frame["minute"], errors="coerce")
    power = pd.to_numeric(frame["power_kw"], errors="coerce")
    connected = pd.to_numeric(frame["connected"], errors="coerce")
    ev_id = frame["ev_id"].astype("string").str.strip()

    valid = (
        minute.notna()
        & (minute == minute.round())
        & power.notna()
        & np.isfinite(power)
        & (power >= 0)
        & connected.isin([0, 1])
        & ev_id.notna()
        & (ev_id != "")
    )
    # a disconnected EV cannot draw power
    valid &= ~((connected == 0) & (power > 0))

    cleaned = pd.DataFrame(
        {
            "ev_id": ev_id[valid].astype(str),
            "minute": minute[valid].astype("int64"),
            "power_kw": power[valid].astype("float64"),
            "connected": connected[valid].astype(bool),
        }
    )
    n_rejected = int((~valid).sum())
    if n_rejected:
        logger.warning("rejected %d of %d minute records", n_rejected, len(frame))
    return cleaned.reset_index(drop=True), n_rejected


def compress_change_points(frame: pd.DataFrame) -> pd.DataFrame:
    """Keep the first and last row and every row where power or connection changes."""
    if frame.empty:
        return frame
    values = frame[["power_kw", "connected"]]
    changed = values.ne(values.shift()).any(axis=1)
    changed.iloc[0] = True
    changed.iloc[-1] = True
    return frame.loc[changed]


def resample_zero_order_hold(frame: pd.DataFrame, start_minute: int, end_minute: int) -> pd.DataFrame:
    """Expand one EV's records onto ``[start_minute, end_minute]`` holding the last value.

    Minutes before the first record count as disconnected.
    """
    if frame["minute"].duplicated().any():
        ev_id = frame["ev_id"].iloc[0]
        raise FlexDataError(f"EV {ev_id}: duplicate minute rows")
    grid = pd.RangeIndex(start_minute, end_minute + 1, name="minute")
    dense = (
        frame.sort_values("minute")
        .set_index("minute")[["power_kw", "connected"]]
        .astype("float64")
        .reindex(grid)
        .ffill()
        .fillna(0.0)
    )
    dense["connected"] = dense["connected"].astype(bool)
    dense.insert(0, "ev_id", frame["ev_id"].iloc[0])
    return dense.reset_index()


def _connected_runs(connected: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    padded = np.concatenate(([0], connected.astype(np.int8), [0]))
    edges = np.diff(padded)
    return np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)


def reconstruct_profiles(records: pd.DataFrame) -> tuple[list[ChargingSession], EvProfile]:
    """Rebuild the sessions and SoC series of one EV from contiguous minute records."""
    if records.empty:
        raise FlexDataError("no records supplied")
    ev_ids = records["ev_id"].unique()
    if len(ev_ids) != 1:
        raise FlexDataError(f"expected records of one EV, got {len(ev_ids)}")
    ev_id = str(ev_ids[0])

    minutes = records["minute"].to_numpy(dtype=np.int64)
    if np.any(np.diff(minutes) != 1):
        raise FlexDataError(f"EV {ev_id}: records must cover contiguous minutes")
    power = records["power_kw"].to_numpy(dtype=float)
    connected = records["connected"].to_numpy(dtype=bool)
    if np.any(power < 0) or np.any(power[~connected] > 0):
        raise FlexDataError(f"EV {ev_id}: negative power or power while disconnected")

    start_minute = int(minutes[0])
    starts, ends = _connected_runs(connected)
    energies = np.array([power[s:e].sum() / MINUTES_PER_HOUR for s, e in zip(starts, ends)])

    if energies.size == 0 or not np.any(energies > 0):
        logger.warning("EV %s has no session with delivered energy; profile unusable", ev_id)
        soc = np.zeros(len(power))
        return [], EvProfile(ev_id, 0.0, 0.0, start_minute, soc, usable=False)

    capacity = float(energies.max())
    charger_max = float(power.max())
    soc = np.full(len(power), capacity)
    sessions: list[ChargingSession] = []
    for s, e, energy in zip(starts, ends, energies):
        delivered = np.cumsum(power[s:e]) / MINUTES_PER_HOUR
        soc[s:e] = capacity - (energy - delivered)
        sessions.append(
            ChargingSession(
                ev_id=ev_id,
                start_minute=start_minute + int(s),
                end_minute=start_minute + int(e),
                session_energy_kwh=float(energy),
            )
        )

    if soc.min() < -1e-9:
        worst = int(np.argmin(soc))
        raise FlexDataError(
            f"EV {ev_id}: SoC below zero ({soc[worst]:.3f} kWh) at minute {start_minute + worst}"
        )
    return sessions, EvProfile(ev_id, capacity, charger_max, start_minute, np.clip(soc, 0.0, capacity))


def ev_flexibility(profile: EvProfile, records: pd.DataFrame) -> MinuteFlex:
    """Up, down and E20 flexibility of one EV at every recorded minute."""
    power = records["power_kw"].to_numpy(dtype=float)
    connected = records["connected"].to_numpy(dtype=bool)
    k = connected.astype(float)

    r_up = power * k
    r_down = (profile.charger_max_kw - power) * k

    # connected for all of t..t+20; the last 20 minutes have no lookahead
    window = LOOKAHEAD_MINUTES + 1
    stays = np.zeros(len(k))
    if len(k) >= window:
        stays[: len(k) - LOOKAHEAD_MINUTES] = np.lib.stride_tricks.sliding_window_view(k, window).min(axis=1)
    r_e = (profile.battery_capacity_kwh - profile.soc_kwh_series) * stays
    r_e20 = np.minimum(profile.charger_max_kw * k, 3.0 * r_e)

    return MinuteFlex(profile.start_minute, r_up, np.maximum(r_down, 0.0), np.maximum(r_e20, 0.0))


def minute_flexibility(profile: EvProfile, records: pd.DataFrame, t: int) -> tuple[float, float, float]:
    """Flexibility triple ``(r_up, r_down, r_e20)`` of one EV at minute ``t``."""
    index = t - profile.start_minute
    if not 0 <= index < len(records):
        raise FlexDataError(f"minute {t} outside recorded range")
    flex = ev_flexibility(profile, records)
    return float(flex.r_up[index]), float(flex.r_down[index]), float(flex.r_e20[index])


def aggregate_and_hourly_min(flexes: Iterable[MinuteFlex]) -> list[HourlyFlexSample]:
    """Sum EVs minute by minute, then take each fully covered hour's minimum."""
    iterator = iter(flexes)
    first = next(iterator, None)
    if first is None:
        raise FlexDataError("no EV flexibility to aggregate")

    start = first.start_minute
    totals = np.vstack([first.r_up, first.r_down, first.r_e20]).astype(float)
    for flex in iterator:
        if flex.start_minute != start or len(flex.r_up) != totals.shape[1]:
            raise FlexDataError("EV flexibilities are not aligned on one minute grid")
        totals[0] += flex.r_up
        totals[1] += flex.r_down
        totals[2] += flex.r_e20

    minutes = np.arange(start, start + totals.shape[1])
    fleet = pd.DataFrame(
        {"hour_index": minutes // MINUTES_PER_HOUR, "r_up": totals[0], "r_down": totals[1], "r_e20": totals[2]}
    )
    grouped = fleet.groupby("hour_index", sort=True)
    hourly = grouped[["r_up", "r_down", "r_e20"]].min()
    coverage = grouped.size()
    full = coverage == MINUTES_PER_HOUR
    if not full.all():
        logger.warning("dropped %d partially covered hour(s)", int((~full).sum()))
    hourly = hourly[full]

    return [
        HourlyFlexSample(
            day=int(hour_index // HOURS_PER_DAY),
            hour=int(hour_index % HOURS_PER_DAY),
            r_up_kw=float(row.r_up),
            r_down_kw=float(row.r_down),
            r_e20_kw=float(row.r_e20),
        )
        for hour_index, row in zip(hourly.index, hourly.itertuples(index=False))
    ]


def samples_to_frame(samples: Iterable[HourlyFlexSample]) -> pd.DataFrame:
    frame = pd.DataFrame([sample.to_dict() for sample in samples], columns=list(HOURLY_COLUMNS))
    return frame.astype({"day": "int64", "hour": "int64"})


def _iter_ev_flex(records: pd.DataFrame, start: int, end: int, unusable: list[str]) -> Iterator[MinuteFlex]:
    for ev_id, ev_records in records.groupby("ev_id", sort=True):
        dense = resample_zero_order_hold(ev_records, start, end)
        try:
            _, profile = reconstruct_profiles(dense)
        except FlexDataError as exc:
            logger.warning("skipping EV %s: %s", ev_id, exc)
            unusable.append(str(ev_id))
            continue
        if not profile.usable:
            unusable.append(str(ev_id))
        yield ev_flexibility(profile, dense)


def estimate_hourly_flex(records: pd.DataFrame) -> tuple[pd.DataFrame, EstimateSummary]:
    """Run the whole estimation on a (possibly change-point compressed) record table."""
    if records.empty:
        raise FlexDataError("no minute records")
    cleaned, n_rejected = clean_records(records)
    if cleaned.empty:
        raise FlexDataError("no valid minute records")

    start = int(cleaned["minute"].min())
    end = int(cleaned["minute"].max())
    unusable: list[str] = []
    n_evs = cleaned["ev_id"].nunique()
    logger.info("estimating flexibility for %d EV(s) over minutes %d..%d", n_evs, start, end)

    samples = aggregate_and_hourly_min(_iter_ev_flex(cleaned, start, end, unusable))
    frame = samples_to_frame(samples)
    n_span_hours = end // MINUTES_PER_HOUR - start // MINUTES_PER_HOUR + 1
    summary = EstimateSummary(
        n_rows=len(records),
        n_rejected_rows=n_rejected,
        n_evs=n_evs,
        n_unusable_evs=len(unusable),
        n_hours=len(frame),
        n_dropped_hours=n_span_hours - len(frame),
    )
    logger.info("emitted %d hourly samples (%d dropped)", summary.n_hours, summary.n_dropped_hours)
    return frame, summary
