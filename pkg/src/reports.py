"""Artifact I/O: manifest-stamped CSV/JSON, streamed minute files and SVG figures.

Every writer goes through a temporary file in the target directory followed
by ``os.replace``, so an interrupted run never leaves a half-written artifact.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import tempfile
from collections.abc import Iterable, Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any, TextIO

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

from bid_runner import EvaluationError  # noqa: E402
from evaluate import PriceSeries  # noqa: E402
from ingest_flex import RECORD_COLUMNS, compress_change_points  # noqa: E402
from manifest import MANIFEST_PREFIX, ArtifactManifest  # noqa: E402
from tail_fit import WeibullParams, weibull_cdf  # noqa: E402

logger = logging.getLogger(__name__)

PRICE_COLUMNS = {"pi_up_eur_per_kw": "pi_up", "pi_down_eur_per_kw": "pi_down"}
SVG_HASH_SALT = "ev-fcr-bidding"
METHOD_COLORS = {"analytical": "tab:blue", "scenario": "tab:orange"}


@contextmanager
def atomic_text_writer(path: str | Path) -> Iterator[TextIO]:
    """Yield a handle on a temp file that replaces ``path`` on clean exit."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", newline="", dir=path.parent, prefix=f".{path.name}.", delete=False
    )
    try:
        with handle:
            yield handle
        os.replace(handle.name, path)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_csv(path: str | Path, frame: pd.DataFrame, manifest: ArtifactManifest) -> Path:
    with atomic_text_writer(path) as handle:
        handle.write(MANIFEST_PREFIX + manifest.to_json() + "\n")
        frame.to_csv(handle, index=False, lineterminator="\n")
    logger.info("wrote %s (%d rows)", path, len(frame))
    return Path(path)


def read_csv(path: str | Path) -> pd.DataFrame:
    """Read an artifact CSV, skipping its manifest comment."""
    return pd.read_csv(path, comment="#", float_precision="round_trip")


def write_json(path: str | Path, payload: dict[str, Any], manifest: ArtifactManifest) -> Path:
    document = {"manifest": manifest.to_dict(), **_json_ready(payload)}
    with atomic_text_writer(path) as handle:
        json.dump(document, handle, indent=2, sort_keys=True, allow_nan=False)
        handle.write("\n")
    logger.info("wrote %s", path)
    return Path(path)


def read_json(path: str | Path) -> dict[str, Any]:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def _json_ready(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_minute_records(
    path: str | Path, ev_frames: Iterable[pd.DataFrame], manifest: ArtifactManifest
) -> tuple[Path, int]:
    """Stream per-EV minute tables to one change-point compressed CSV.

    Returns the path and the number of EVs written.
    """
    n_evs = 0
    with atomic_text_writer(path) as handle:
        handle.write(MANIFEST_PREFIX + manifest.to_json() + "\n")
        handle.write(",".join(RECORD_COLUMNS) + "\n")
        for frame in ev_frames:
            compressed = compress_change_points(frame[list(RECORD_COLUMNS)])
            compressed.to_csv(handle, index=False, header=False, lineterminator="\n")
            n_evs += 1
    logger.info("wrote %s (%d EV(s))", path, n_evs)
    return Path(path), n_evs


def read_minute_records(path: str | Path) -> pd.DataFrame:
    """Read a minute CSV; gaps are expanded later by zero-order hold."""
    return pd.read_csv(path, comment="#", dtype={"ev_id": str}, float_precision="round_trip")


def read_prices(path: str | Path) -> PriceSeries:
    """Read ``day,hour,pi_up_eur_per_kw,pi_down_eur_per_kw``."""
    frame = pd.read_csv(path, comment="#", float_precision="round_trip")
    missing = {"day", "hour", *PRICE_COLUMNS} - set(frame.columns)
    if missing:
        raise EvaluationError(f"{path}: price file is missing columns: {', '.join(sorted(missing))}")
    return PriceSeries(frame.rename(columns=PRICE_COLUMNS)[["day", "hour", "pi_up", "pi_down"]])


def _save_svg(fig: plt.Figure, path: str | Path, manifest: ArtifactManifest) -> Path:
    buffer = io.BytesIO()
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(buffer, format="svg", metadata={"Date": None, "Description": manifest.to_json()})
    plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())
    logger.info("wrote %s", path)
    return Path(path)


def plot_bids_per_hour(summary: pd.DataFrame, path: str | Path, manifest: ArtifactManifest) -> Path:
    """Mean hourly bids per method, down stacked on up."""
    methods = sorted(summary["method"].unique())
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(10, 4))
    for i, method in enumerate(methods):
        rows = summary[summary["method"] == method].sort_values("hour")
        x = rows["hour"].to_numpy() + (i - (len(methods) - 1) / 2) * width
        color = METHOD_COLORS.get(method)
        ax.bar(x, rows["b_up_kw_mean"], width, color=color, label=f"{method} up")
        ax.bar(
            x, rows["b_down_kw_mean"], width, bottom=rows["b_up_kw_mean"],
            color=color, alpha=0.45, hatch="//", label=f"{method} down",
        )
    ax.set_xlabel("hour of day")
    ax.set_ylabel("mean bid [kW]")
    ax.set_xticks(range(24))
    ax.legend(ncol=2, fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path, manifest)


def plot_violation_rates(
    summary: pd.DataFrame, path: str | Path, manifest: ArtifactManifest, eps: float
) -> Path:
    """Mean joint out-of-sample violation rate per hour and method."""
    methods = sorted(summary["method"].unique())
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(10, 4))
    for i, method in enumerate(methods):
        rows = summary[summary["method"] == method].sort_values("hour")
        x = rows["hour"].to_numpy() + (i - (len(methods) - 1) / 2) * width
        ax.bar(x, rows["joint_rate_mean"], width, color=METHOD_COLORS.get(method), label=method)
    ax.axhline(eps, color="black", linestyle="--", linewidth=1, label=f"eps = {eps:g}")
    ax.set_xlabel("hour of day")
    ax.set_ylabel("joint violation rate")
    ax.set_xticks(range(24))
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path, manifest)


def plot_sensitivity(sweep: pd.DataFrame, path: str | Path, manifest: ArtifactManifest) -> Path:
    """Total daily bid against alpha with the 95% confidence band."""
    rows = sweep.sort_values("alpha")
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(rows["alpha"], rows["total_mean_kw"], marker="o", color="tab:blue", label="mean total bid")
    band = rows[["ci_lo_kw", "ci_hi_kw"]].notna().all(axis=1)
    if band.any():
        ax.fill_between(
            rows.loc[band, "alpha"], rows.loc[band, "ci_lo_kw"], rows.loc[band, "ci_hi_kw"],
            color="gray", alpha=0.3, label="95% CI",
        )
    ax.set_xscale("log")
    ax.set_xlabel("alpha (per-constraint violation level)")
    ax.set_ylabel("total daily bid [kW]")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path, manifest)


def plot_tail_fit(
    tail: np.ndarray,
    params: WeibullParams,
    path: str | Path,
    manifest: ArtifactManifest,
    title: str = "",
) -> Path:
    """Empirical CDF of a mirrored tail against its fitted Weibull CDF."""
    x = np.sort(np.asarray(tail, dtype=float))
    grid = np.linspace(0.0, float(x.max()) * 1.1, 200)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(x, np.arange(1, x.size + 1) / x.size, where="post", color="tab:gray", label="empirical")
    ax.plot(
        grid, weibull_cdf(params, grid), color="tab:red",
        label=f"Weibull (kappa={params.kappa:.3g}, gamma={params.gamma:.3g})",
    )
    ax.set_xlabel("x = r_eps - r [kW]")
    ax.set_ylabel("CDF")
    if title:
        ax.set_title(title)
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save_svg(fig, path, manifest)
