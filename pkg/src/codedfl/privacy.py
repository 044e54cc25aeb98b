"""Mutual-information privacy budget for releasing a parity dataset.

The budget bounds, in bits, what u Gaussian-coded parity rows reveal
about any single entry of the client's embedded feature matrix.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["PrivacyReport", "feature_vulnerability", "privacy_budget"]

_RADEMACHER_WARNING = (
    "budget is proven for gaussian encoding entries; rademacher encoding "
    "is configured, treat the bound as indicative only"
)


@dataclass(frozen=True)
class PrivacyReport:
    """Leakage bound for sharing u parity rows built from one feature matrix.

    epsilon is infinite (unbounded leakage) when some feature column
    concentrates all its mass on a single row.
    """

    f_value: float
    epsilon: float  # bits
    u: int
    warning: str | None = None


def feature_vulnerability(features: np.ndarray) -> float:
    """Smallest per-column residual norm after removing the dominant row.

    For each column, take the square root of (sum of squared entries minus
    the largest squared entry); return the minimum over columns.  Small
    values mean the data concentrates along few rows in some feature
    direction, which is the vulnerable case.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D matrix with at least two rows")
    sq = X * X
    residual = sq.sum(axis=0) - sq.max(axis=0)
    return float(np.sqrt(max(residual.min(), 0.0)))


def privacy_budget(
    features: np.ndarray, u: int, encoding: str = "gaussian"
) -> PrivacyReport:
    """Budget epsilon = 1/2 * log2(1 + u / f^2) in bits for u parity rows."""
    if u < 1:
        raise ValueError(f"u must be >= 1, got {u}")
    f = feature_vulnerability(features)
    if f > 0.0:
        epsilon = 0.5 * math.log2(1.0 + u / (f * f))
    else:
        epsilon = math.inf
    warning = _RADEMACHER_WARNING if encoding == "rademacher" else None
    return PrivacyReport(f_value=f, epsilon=epsilon, u=int(u), warning=warning)
