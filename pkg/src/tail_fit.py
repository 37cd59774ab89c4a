"""Weibull fits to the lower tail of hourly flexibility samples.

The tail below the empirical eps-quantile ``r_eps`` is mirrored to
``x = r_eps - r > 0`` and a two-parameter Weibull with CDF
``1 - exp(-kappa * x**gamma)`` is fitted by profile maximum likelihood:
kappa has a closed form for a given gamma, leaving a 1-D search over gamma.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import logsumexp

from config_schema import GammaGrid

logger = logging.getLogger(__name__)

MIN_TAIL_SIZE = 2
GOLDEN_XTOL = 1e-8


class TailFitError(ValueError):
    """Raised when a tail cannot be extracted or fitted."""


@dataclass(frozen=True)
class WeibullParams:
    """Scale ``kappa`` and shape ``gamma`` of a two-parameter Weibull."""

    kappa: float
    gamma: float

    def __post_init__(self) -> None:
        if not (self.kappa > 0 and self.gamma > 0):
            raise TailFitError(f"Weibull parameters must be positive, got {self.kappa}, {self.gamma}")


@dataclass(frozen=True)
class WeibullTailFit:
    """Threshold plus fitted Weibull of one flexibility's lower tail."""

    threshold_kw: float
    params: WeibullParams
    n_tail: int
    nll: float
    at_grid_boundary: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold_kw": self.threshold_kw,
            "kappa": self.params.kappa,
            "gamma": self.params.gamma,
            "n_tail": self.n_tail,
            "nll": self.nll,
            "at_grid_boundary": self.at_grid_boundary,
        }


def _positive_array(x: Any) -> np.ndarray:
    values = np.asarray(x, dtype=float).ravel()
    if values.size == 0:
        raise TailFitError("tail sample is empty")
    if np.any(~np.isfinite(values)) or np.any(values <= 0):
        raise TailFitError("tail values must be finite and strictly positive")
    return values


def empirical_quantile(samples: Any, eps: float) -> float:
    """Linear-interpolation quantile at 1-based position ``1 + (n - 1) * eps``."""
    values = np.asarray(samples, dtype=float).ravel()
    if values.size < 2:
        raise TailFitError("empirical quantile needs at least 2 samples")
    if not 0.0 < eps < 1.0:
        raise TailFitError("eps must be between 0 and 1 (exclusive)")
    return float(np.quantile(values, eps, method="linear"))


def extract_tail(samples: Any, threshold: float) -> np.ndarray:
    """Mirror the samples strictly below ``threshold`` to positive distances."""
    values = np.asarray(samples, dtype=float).ravel()
    x = threshold - values[values < threshold]
    if x.size < MIN_TAIL_SIZE:
        raise TailFitError(f"only {x.size} tail point(s) below threshold {threshold:g}")
    return x


def kappa_hat(x: Any, gamma: float) -> float:
    """Closed-form MLE of kappa for a given gamma."""
    values = _positive_array(x)
    with np.errstate(over="raise"):
        try:
            return float(values.size / np.sum(values**gamma))
        except FloatingPointError as exc:
            raise TailFitError(f"x**gamma overflows at gamma={gamma:g}") from exc


def profile_loglik(x: Any, gamma: float, *, as_printed: bool = False) -> float:
    """Log-likelihood with kappa concentrated out.

    ``n (log n - log sum x^g + log g - 1) + (g - 1) sum log x``. With
    ``as_printed=True`` the last term is taken as ``(g - 1) sum log(x^g)``.

    The default form equals the full Weibull log-likelihood at ``kappa_hat``,
    so its maximiser recovers the generating shape from large samples; the
    fit always uses it. The ``as_printed`` form is kept for comparison only.
    """
    values = _positive_array(x)
    if gamma <= 0:
        raise TailFitError("gamma must be positive")
    n = values.size
    log_x = np.log(values)
    log_sum = logsumexp(gamma * log_x)
    shape_term = (gamma - 1.0) * (gamma if as_printed else 1.0) * log_x.sum()
    value = n * (np.log(n) - log_sum + np.log(gamma) - 1.0) + shape_term
    if not np.isfinite(value):
        raise TailFitError(f"profile log-likelihood is not finite at gamma={gamma:g}")
    return float(value)


def fit_weibull_mle(x: Any, grid: GammaGrid | None = None, *, threshold_kw: float = 0.0) -> WeibullTailFit:
    """Maximize the profile likelihood over a log-spaced gamma grid, then refine."""
    values = _positive_array(x)
    if values.size < MIN_TAIL_SIZE:
        raise TailFitError(f"need at least {MIN_TAIL_SIZE} tail points, got {values.size}")
    grid = grid or GammaGrid()

    gammas = np.geomspace(grid.lo, grid.hi, grid.steps)
    logliks = np.array([profile_loglik(values, g) for g in gammas])
    best = int(np.argmax(logliks))
    gamma, loglik = float(gammas[best]), float(logliks[best])

    at_boundary = best in (0, len(gammas) - 1)
    if at_boundary:
        logger.warning("Weibull fit hit the gamma grid boundary (gamma=%g); widen the grid", gamma)
    else:
        try:
            result = minimize_scalar(
                lambda g: -profile_loglik(values, g),
                bracket=(gammas[best - 1], gammas[best], gammas[best + 1]),
                method="golden",
                options={"xtol": GOLDEN_XTOL},
            )
        except ValueError:
            # flat neighbourhood; the grid optimum stands
            result = None
        if result is not None and -result.fun >= loglik:
            gamma, loglik = float(result.x), float(-result.fun)

    return WeibullTailFit(
        threshold_kw=float(threshold_kw),
        params=WeibullParams(kappa=kappa_hat(values, gamma), gamma=gamma),
        n_tail=int(values.size),
        nll=-loglik,
        at_grid_boundary=at_boundary,
    )


def fit_tail(samples: Any, eps: float, grid: GammaGrid | None = None) -> tuple[WeibullTailFit, np.ndarray]:
    """Threshold, tail extraction and fit in one step; returns the fit and its tail."""
    threshold = empirical_quantile(samples, eps)
    x = extract_tail(samples, threshold)
    return fit_weibull_mle(x, grid, threshold_kw=threshold), x


def weibull_pdf(params: WeibullParams, x: Any) -> float | np.ndarray:
    values = np.asarray(x, dtype=float)
    safe = np.where(values > 0, values, 1.0)
    density = params.kappa * params.gamma * safe ** (params.gamma - 1) * np.exp(-params.kappa * safe**params.gamma)
    result = np.where(values > 0, density, 0.0)
    return float(result) if result.ndim == 0 else result


def weibull_cdf(params: WeibullParams, x: Any) -> float | np.ndarray:
    values = np.asarray(x, dtype=float)
    clipped = np.maximum(values, 0.0)
    result = np.where(values >= 0, -np.expm1(-params.kappa * clipped**params.gamma), 0.0)
    return float(result) if result.ndim == 0 else result


def weibull_survival(params: WeibullParams, x: Any) -> float | np.ndarray:
    """Tail probability; zero for negative x, as the CDF convention leaves it."""
    values = np.asarray(x, dtype=float)
    clipped = np.maximum(values, 0.0)
    result = np.where(values >= 0, np.exp(-params.kappa * clipped**params.gamma), 0.0)
    return float(result) if result.ndim == 0 else result
