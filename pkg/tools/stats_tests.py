"""Hypothesis tests for feature selection.

Binary features are tested with the two-sided Fisher exact test on the
feature × label contingency table, continuous features with the two-sample
Kolmogorov-Smirnov test between the two label groups.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import StrEnum
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import kolmogorov
from scipy.stats import hypergeom

logger = logging.getLogger(__name__)

# Relative tolerance when comparing point probabilities against the observed one
FISHER_TIE_RTOL = 1e-7


class FeatureTest(StrEnum):
    """Hypothesis test applied to a feature."""

    FISHER = "fisher"
    KS = "ks"


class ContingencyTable2x2(NamedTuple):
    """Counts of a 2×2 table: rows feature 0/1, columns label 0/1.

    ``[[a, b], [c, d]]``.
    """

    a: int
    b: int
    c: int
    d: int

    @property
    def total(self) -> int:
        return self.a + self.b + self.c + self.d

    @classmethod
    def from_rows(cls, rows: list[list[int]]) -> ContingencyTable2x2:
        (a, b), (c, d) = rows
        return cls(int(a), int(b), int(c), int(d))


class KsResult(NamedTuple):
    statistic: float
    p_value: float


@dataclass(frozen=True)
class SelectionResult:
    """Per-feature outcome of the hypothesis-test selection."""

    retained_mask: np.ndarray
    p_values: np.ndarray
    test_used: tuple[FeatureTest, ...]
    alpha: float

    @property
    def n_retained(self) -> int:
        return int(self.retained_mask.sum())


# ---------------------------------------------------------------------------
# Fisher exact test
# ---------------------------------------------------------------------------


@lru_cache(maxsize=65536)
def _null_distribution(row1: int, col1: int, total: int) -> tuple[int, np.ndarray]:
    """Hypergeometric pmf of the top-left cell given the table margins.

    Returns the smallest attainable value of the cell and the pmf over the
    support ``lo..hi``.
    """
    lo = max(0, row1 + col1 - total)
    hi = min(row1, col1)
    support = np.arange(lo, hi + 1)
    pmf = hypergeom.pmf(support, total, col1, row1)
    pmf.flags.writeable = False
    return lo, pmf


def fisher_exact_two_sided(table: ContingencyTable2x2) -> float:
    """Two-sided Fisher exact p-value by point-probability summation.

    Sums the probabilities of all tables with the observed margins whose
    probability does not exceed the observed one (relative tie tolerance
    ``1e-7``). An all-zero table yields ``1.0``.
    """
    if min(table) < 0:
        msg = f"contingency counts must be non-negative, got {tuple(table)}"
        raise ValueError(msg)
    total = table.total
    if total == 0:
        return 1.0
    row1 = table.a + table.b
    col1 = table.a + table.c
    lo, pmf = _null_distribution(row1, col1, total)
    observed = pmf[table.a - lo]
    p = pmf[pmf <= observed * (1.0 + FISHER_TIE_RTOL)].sum()
    return float(min(1.0, max(0.0, p)))


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov two-sample test
# ---------------------------------------------------------------------------


def ks_statistic(x: np.ndarray, y: np.ndarray) -> float:
    """Sup-distance between the two empirical CDFs over all sample points."""
    xs = np.sort(np.asarray(x, dtype=np.float64))
    ys = np.sort(np.asarray(y, dtype=np.float64))
    points = np.concatenate([xs, ys])
    cdf_x = np.searchsorted(xs, points, side="right") / xs.size
    cdf_y = np.searchsorted(ys, points, side="right") / ys.size
    return float(np.max(np.abs(cdf_x - cdf_y)))


def ks_two_sample(x: np.ndarray, y: np.ndarray) -> KsResult:
    """Two-sample KS statistic with its asymptotic p-value.

    The p-value is the Kolmogorov survival function at ``sqrt(ne) * D`` with
    the effective size ``ne = n*m / (n+m)``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size == 0 or y.size == 0:
        raise ValueError("KS test needs at least one value in each sample")
    d = ks_statistic(x, y)
    ne = x.size * y.size / (x.size + y.size)
    p = float(kolmogorov(np.sqrt(ne) * d))
    return KsResult(statistic=d, p_value=min(1.0, max(0.0, p)))


# ---------------------------------------------------------------------------
# Feature selection
# ---------------------------------------------------------------------------


def _binary_table(values: np.ndarray, labels: np.ndarray) -> ContingencyTable2x2:
    """Feature × label table of a feature with at most two distinct values."""
    distinct = np.unique(values)
    if distinct.size == 2:
        high = values == distinct[-1]
    else:
        high = np.zeros(values.shape, dtype=bool)
    pos = labels == 1
    return ContingencyTable2x2(
        a=int(np.sum(~high & ~pos)),
        b=int(np.sum(~high & pos)),
        c=int(np.sum(high & ~pos)),
        d=int(np.sum(high & pos)),
    )


def feature_p_value(
    values: np.ndarray, labels: np.ndarray
) -> tuple[FeatureTest, float]:
    """Test one feature column for dependence on the binary labels."""
    values = np.asarray(values, dtype=np.float64)
    if np.unique(values).size <= 2:
        p = fisher_exact_two_sided(_binary_table(values, labels))
        return FeatureTest.FISHER, p
    result = ks_two_sample(values[labels == 0], values[labels == 1])
    return FeatureTest.KS, result.p_value


def select_features(
    matrix: np.ndarray, labels: np.ndarray, alpha: float = 0.05
) -> SelectionResult:
    """Retain features whose test p-value is below ``alpha``."""
    if not 0.0 < alpha < 1.0:
        msg = f"alpha must lie in (0, 1), got {alpha}"
        raise ValueError(msg)
    matrix = np.asarray(matrix, dtype=np.float64)
    labels = np.asarray(labels)
    if not np.all(np.isfinite(matrix)):
        raise ValueError("feature matrix must be finite")
    if np.unique(labels).size < 2:
        raise ValueError("feature selection needs both classes in the labels")

    tests: list[FeatureTest] = []
    p_values = np.empty(matrix.shape[1])
    for j in range(matrix.shape[1]):
        test, p = feature_p_value(matrix[:, j], labels)
        tests.append(test)
        p_values[j] = p

    mask = p_values < alpha
    logger.debug(
        "Selection: %d of %d features below alpha=%g", mask.sum(), mask.size, alpha
    )
    return SelectionResult(
        retained_mask=mask, p_values=p_values, test_used=tuple(tests), alpha=alpha
    )
