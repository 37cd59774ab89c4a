"""Typed pipeline configuration and key=value config validation."""

from __future__ import annotations

import math
from collections.abc import Collection
from dataclasses import asdict, dataclass, field
from typing import Any


MINUTES_PER_DAY = 1440

DEFAULT_ALPHA_GRID = (0.1, 0.0333, 0.01, 0.005, 0.0005)

# defaults computed from eps
EPS_DERIVED_KEYS = frozenset({"alpha", "in_sample_size", "cv_draw_size"})

SYNTH_KEYS = {
    "n_evs",
    "n_days",
    "arrival_mean_min",
    "arrival_spread_min",
    "departure_mean_min",
    "departure_spread_min",
    "battery_min_kwh",
    "battery_max_kwh",
    "charger_levels_kw",
    "plug_in_probability",
    "energy_need_min_frac",
    "energy_need_max_frac",
}

PIPELINE_KEYS = {
    "seed",
    "eps",
    "alpha",
    "delta",
    "n_runs",
    "in_sample_size",
    "gamma_lo",
    "gamma_hi",
    "gamma_steps",
    "cv_draw_size",
    "cv_reps",
    "alpha_grid",
    "output_dir",
}


class ConfigValidationError(ValueError):
    """Raised when a configuration payload fails validation."""


@dataclass(frozen=True)
class GammaGrid:
    """Search range for the Weibull shape parameter."""

    lo: float = 0.05
    hi: float = 5.0
    steps: int = 200

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class SynthFleetConfig:
    """Parameters of the overnight residential charging generator.

    Times are minutes of day. Arrivals happen in the evening and the matching
    departure falls on the next morning.
    """

    n_evs: int = 200
    n_days: int = 366
    seed: int = 7
    arrival_mean_min: float = 1080.0
    arrival_spread_min: float = 90.0
    departure_mean_min: float = 450.0
    departure_spread_min: float = 60.0
    battery_min_kwh: float = 40.0
    battery_max_kwh: float = 80.0
    charger_levels_kw: tuple[float, ...] = (3.7, 7.4, 11.0)
    plug_in_probability: float = 0.8
    energy_need_min_frac: float = 0.1
    energy_need_max_frac: float = 0.6

    def to_dict(self) -> dict[str, Any]:
        output = asdict(self)
        output["charger_levels_kw"] = list(self.charger_levels_kw)
        return output


@dataclass(frozen=True)
class PipelineConfig:
    """Every knob of the synth -> estimate -> bid -> validate -> report chain."""

    seed: int = 7
    eps: float = 0.1
    alpha: float = 0.1 / 3
    delta: float = 0.01
    n_runs: int = 10
    in_sample_size: int = 216
    gamma_grid: GammaGrid = field(default_factory=GammaGrid)
    cv_draw_size: int = 216
    cv_reps: int = 5000
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID
    synth: SynthFleetConfig = field(default_factory=SynthFleetConfig)
    output_dir: str = "artifacts"

    def to_dict(self) -> dict[str, Any]:
        """Return the hashable part of the config; paths are left out."""
        return {
            "seed": self.seed,
            "eps": self.eps,
            "alpha": self.alpha,
            "delta": self.delta,
            "n_runs": self.n_runs,
            "in_sample_size": self.in_sample_size,
            "gamma_grid": self.gamma_grid.to_dict(),
            "cv_draw_size": self.cv_draw_size,
            "cv_reps": self.cv_reps,
            "alpha_grid": list(self.alpha_grid),
            "synth": self.synth.to_dict(),
        }


def parse_key_value_text(text: str) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    payload: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigValidationError(f"line {lineno}: expected key=value, got {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigValidationError(f"line {lineno}: empty key")
        if key in payload:
            raise ConfigValidationError(f"line {lineno}: duplicate key {key!r}")
        payload[key] = value
    return payload


def _optional_float(payload: dict[str, Any], field: str, default: float) -> float:
    value = payload.get(field)
    if value is None:
        return default
    if isinstance(value, bool):  # bool is a subclass of int
        raise ConfigValidationError(f"{field} must be a numeric value")
    try:
        number = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigValidationError(f"{field} must be a numeric value") from exc
    if not math.isfinite(number):
        raise ConfigValidationError(f"{field} must be finite")
    return number


def _optional_int(payload: dict[str, Any], field: str, default: int) -> int:
    value = payload.get(field)
    if value is None:
        return default
    if isinstance(value, bool):
        raise ConfigValidationError(f"{field} must be an integer")
    if isinstance(value, float) and not value.is_integer():
        raise ConfigValidationError(f"{field} must be an integer")
    try:
        return int(str(value).strip()) if isinstance(value, str) else int(value)
    except (TypeError, ValueError) as exc:
        raise ConfigValidationError(f"{field} must be an integer") from exc


def _optional_float_list(
    payload: dict[str, Any], field: str, default: tuple[float, ...]
) -> tuple[float, ...]:
    value = payload.get(field)
    if value is None:
        return default
    items = value.split(",") if isinstance(value, str) else list(value)
    parsed = tuple(_optional_float({field: item}, field, 0.0) for item in items if str(item).strip())
    if not parsed:
        raise ConfigValidationError(f"{field} must list at least one value")
    return parsed


def check_synth_config(cfg: SynthFleetConfig) -> None:
    """Reject ranges, probabilities and time windows the generator cannot honour."""
    if cfg.n_evs < 0:
        raise ConfigValidationError("n_evs must be >= 0")
    if cfg.n_days < 1:
        raise ConfigValidationError("n_days must be >= 1")
    if cfg.seed < 0:
        raise ConfigValidationError("seed must be >= 0")
    if not 0.0 <= cfg.plug_in_probability <= 1.0:
        raise ConfigValidationError("plug_in_probability must be between 0 and 1")
    if not 0.0 < cfg.battery_min_kwh <= cfg.battery_max_kwh:
        raise ConfigValidationError("battery range must satisfy 0 < battery_min_kwh <= battery_max_kwh")
    if not cfg.charger_levels_kw or any(level <= 0 for level in cfg.charger_levels_kw):
        raise ConfigValidationError("charger_levels_kw must be non-empty and positive")
    if not 0.0 < cfg.energy_need_min_frac <= cfg.energy_need_max_frac <= 1.0:
        raise ConfigValidationError("energy need fractions must satisfy 0 < min <= max <= 1")
    if cfg.arrival_spread_min < 0 or cfg.departure_spread_min < 0:
        raise ConfigValidationError("time spreads must be >= 0")

    arrival_lo = cfg.arrival_mean_min - 3 * cfg.arrival_spread_min
    arrival_hi = cfg.arrival_mean_min + 3 * cfg.arrival_spread_min
    departure_lo = cfg.departure_mean_min - 3 * cfg.departure_spread_min
    departure_hi = cfg.departure_mean_min + 3 * cfg.departure_spread_min
    if arrival_lo < 0 or arrival_hi >= MINUTES_PER_DAY:
        raise ConfigValidationError("arrival support (mean +/- 3 spread) must lie within one day")
    if departure_lo < 0 or departure_hi >= MINUTES_PER_DAY:
        raise ConfigValidationError("departure support (mean +/- 3 spread) must lie within one day")
    if departure_hi >= arrival_lo:
        raise ConfigValidationError(
            "departure support must end before arrival support begins "
            f"({departure_hi:g} >= {arrival_lo:g})"
        )


def validate_synth_config(payload: dict[str, Any], *, seed: int | None = None) -> SynthFleetConfig:
    """Build a SynthFleetConfig from raw values and check feasibility."""
    base = SynthFleetConfig()
    cfg = SynthFleetConfig(
        n_evs=_optional_int(payload, "n_evs", base.n_evs),
        n_days=_optional_int(payload, "n_days", base.n_days),
        seed=seed if seed is not None else _optional_int(payload, "seed", base.seed),
        arrival_mean_min=_optional_float(payload, "arrival_mean_min", base.arrival_mean_min),
        arrival_spread_min=_optional_float(payload, "arrival_spread_min", base.arrival_spread_min),
        departure_mean_min=_optional_float(payload, "departure_mean_min", base.departure_mean_min),
        departure_spread_min=_optional_float(payload, "departure_spread_min", base.departure_spread_min),
        battery_min_kwh=_optional_float(payload, "battery_min_kwh", base.battery_min_kwh),
        battery_max_kwh=_optional_float(payload, "battery_max_kwh", base.battery_max_kwh),
        charger_levels_kw=_optional_float_list(payload, "charger_levels_kw", base.charger_levels_kw),
        plug_in_probability=_optional_float(payload, "plug_in_probability", base.plug_in_probability),
        energy_need_min_frac=_optional_float(payload, "energy_need_min_frac", base.energy_need_min_frac),
        energy_need_max_frac=_optional_float(payload, "energy_need_max_frac", base.energy_need_max_frac),
    )
    check_synth_config(cfg)
    return cfg


def validate_pipeline_config(payload: dict[str, Any]) -> PipelineConfig:
    """Validate a raw key=value payload and return a typed pipeline config."""
    if not isinstance(payload, dict):
        raise ConfigValidationError("payload must be a dictionary")

    unknown = set(payload) - PIPELINE_KEYS - SYNTH_KEYS
    if unknown:
        raise ConfigValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")

    seed = _optional_int(payload, "seed", 7)
    if seed < 0:
        raise ConfigValidationError("seed must be >= 0")

    eps = _optional_float(payload, "eps", 0.1)
    if not 0.0 < eps < 1.0:
        raise ConfigValidationError("eps must be between 0 and 1 (exclusive)")

    alpha = _optional_float(payload, "alpha", eps / 3)
    if not 0.0 < alpha <= eps:
        raise ConfigValidationError("alpha must satisfy 0 < alpha <= eps")

    delta = _optional_float(payload, "delta", 0.01)
    if not 0.0 < delta < 1.0:
        raise ConfigValidationError("delta must be between 0 and 1 (exclusive)")

    n_runs = _optional_int(payload, "n_runs", 10)
    if n_runs < 1:
        raise ConfigValidationError("n_runs must be >= 1")

    # local import keeps solvers free of config types
    from solvers import required_sample_size

    in_sample_size = _optional_int(payload, "in_sample_size", required_sample_size(eps, delta, 2))
    if in_sample_size < 2:
        raise ConfigValidationError("in_sample_size must be >= 2")

    gamma_grid = GammaGrid(
        lo=_optional_float(payload, "gamma_lo", 0.05),
        hi=_optional_float(payload, "gamma_hi", 5.0),
        steps=_optional_int(payload, "gamma_steps", 200),
    )
    if not 0.0 < gamma_grid.lo < gamma_grid.hi:
        raise ConfigValidationError("gamma grid must satisfy 0 < gamma_lo < gamma_hi")
    if gamma_grid.steps < 2:
        raise ConfigValidationError("gamma_steps must be >= 2")

    cv_draw_size = _optional_int(payload, "cv_draw_size", in_sample_size)
    cv_reps = _optional_int(payload, "cv_reps", 5000)
    if cv_draw_size < 2 or cv_reps < 1:
        raise ConfigValidationError("cv_draw_size must be >= 2 and cv_reps >= 1")

    alpha_grid = _optional_float_list(payload, "alpha_grid", DEFAULT_ALPHA_GRID)
    if any(not 0.0 < a <= eps for a in alpha_grid):
        raise ConfigValidationError("every alpha_grid value must satisfy 0 < alpha <= eps")

    output_dir = str(payload.get("output_dir", "artifacts")).strip()
    if not output_dir:
        raise ConfigValidationError("output_dir must be a non-empty string")

    return PipelineConfig(
        seed=seed,
        eps=eps,
        alpha=alpha,
        delta=delta,
        n_runs=n_runs,
        in_sample_size=in_sample_size,
        gamma_grid=gamma_grid,
        cv_draw_size=cv_draw_size,
        cv_reps=cv_reps,
        alpha_grid=alpha_grid,
        synth=validate_synth_config(payload, seed=seed),
        output_dir=output_dir,
    )


def with_overrides(
    config: PipelineConfig,
    *,
    given_keys: Collection[str] = (),
    **overrides: Any,
) -> PipelineConfig:
    """Re-validate a config after command-line overrides.

    ``given_keys`` names the keys set in the config file. When eps is
    overridden, alpha, in_sample_size and cv_draw_size are re-derived from
    the new eps unless the file or the command line set them.
    """
    payload: dict[str, Any] = {
        key: value
        for key, value in config.to_dict().items()
        if key not in {"gamma_grid", "synth"}
    }
    payload.update(
        gamma_lo=config.gamma_grid.lo,
        gamma_hi=config.gamma_grid.hi,
        gamma_steps=config.gamma_grid.steps,
        output_dir=config.output_dir,
    )
    payload.update({k: v for k, v in config.synth.to_dict().items() if k != "seed"})
    given = set(given_keys) | {k for k, v in overrides.items() if v is not None}
    payload.update({k: v for k, v in overrides.items() if v is not None})
    if "eps" in overrides and overrides["eps"] is not None:
        eps = float(payload["eps"])
        for key in EPS_DERIVED_KEYS - given:
            payload.pop(key, None)
        # sweep levels above a lowered eps are dropped
        alpha = float(payload.get("alpha", eps / 3))
        payload["alpha_grid"] = [a for a in payload["alpha_grid"] if a <= eps] or [alpha]
    return validate_pipeline_config(payload)
