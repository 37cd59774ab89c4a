"""Goodness of fit for tail fits: ECDF, one-sample KS test and NLL ranking."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from scipy import special

from tail_fit import WeibullTailFit, weibull_cdf

ACCEPT_P_VALUE = 0.05


class GofError(ValueError):
    """Raised when a goodness-of-fit statistic cannot be computed."""


@dataclass(frozen=True)
class KsResult:
    """KS statistic, its asymptotic p-value and the sample count."""

    d_n: float
    p_value: float
    n: int

    @property
    def accepted(self) -> bool:
        return self.p_value > ACCEPT_P_VALUE

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _sample_array(samples: Any) -> np.ndarray:
    values = np.asarray(samples, dtype=float).ravel()
    if values.size == 0:
        raise GofError("samples must not be empty")
    return values


def ecdf(samples: Any, x: float) -> float:
    """Fraction of samples ``<= x``."""
    values = np.sort(_sample_array(samples))
    return float(np.searchsorted(values, x, side="right") / values.size)


def kolmogorov_survival(lam: float) -> float:
    """Kolmogorov distribution survival ``Q(lam)``, clipped to [0, 1]."""
    if lam <= 0.0:
        return 1.0
    return float(np.clip(special.kolmogorov(lam), 0.0, 1.0))


def ks_test(samples: Any, reference_cdf: Callable[[np.ndarray], Any]) -> KsResult:
    """One-sample KS test against a continuous reference CDF."""
    values = np.sort(_sample_array(samples))
    n = values.size
    cdf = np.asarray(reference_cdf(values), dtype=float)
    if cdf.shape != values.shape:
        cdf = np.array([float(reference_cdf(v)) for v in values])
    ranks = np.arange(1, n + 1)
    d_plus = np.max(ranks / n - cdf)
    d_minus = np.max(cdf - (ranks - 1) / n)
    d_n = float(min(1.0, max(d_plus, d_minus, 0.0)))

    root_n = math.sqrt(n)
    lam = (root_n + 0.12 + 0.11 / root_n) * d_n
    return KsResult(d_n=d_n, p_value=kolmogorov_survival(lam), n=n)


def ks_test_fit(fit: WeibullTailFit, x: Any) -> KsResult:
    """KS test of a mirrored tail against its own fitted Weibull."""
    return ks_test(x, lambda values: weibull_cdf(fit.params, values))


def nll_compare(fits: Sequence[WeibullTailFit]) -> list[int]:
    """Input positions ordered by ascending NLL; ties keep input order."""
    return sorted(range(len(fits)), key=lambda i: fits[i].nll)
