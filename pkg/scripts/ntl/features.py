"""Feature families computed from 24-month consumption series.

Families are concatenated in a fixed order: daily average, fixed interval,
generic statistics, intra-year difference, intra-year seasonal difference.
Every feature name starts with its family id, so a feature matrix can always
be split back into families.
"""

from __future__ import annotations

import itertools
import logging
from collections.abc import Callable, Sequence
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from pydantic import Field, field_validator
from scipy.stats import kurtosis, linregress, skew

from scripts.ntl.errors import ConfigError, DataError
from scripts.ntl.models import (
    N_MONTHS,
    FeatureFamily,
    LabeledDataset,
    MonthlyTimeSeries,
    NtlConfig,
    write_csv,
)
from tools.stats_tests import SelectionResult, select_features

logger = logging.getLogger(__name__)

MONTHS_PER_YEAR = 12
AUTOCORR_LAGS = range(1, 13)

# ---------------------------------------------------------------------------
# Generic statistic bank
# ---------------------------------------------------------------------------


def _is_constant(x: np.ndarray) -> bool:
    return bool(np.ptp(x) == 0)


# Relative spread below which the third and fourth moments are rounding noise
MOMENT_RESOLUTION = 10 * np.finfo(np.float64).resolution


def _is_flat(x: np.ndarray) -> bool:
    """Constant up to rounding, so skewness and kurtosis are undefined."""
    scale = MOMENT_RESOLUTION * float(np.mean(np.abs(x)))
    return bool(np.var(x) <= scale * scale)


def _shape_moment(statistic: Callable[[np.ndarray], float], x: np.ndarray) -> float:
    if _is_flat(x):
        return 0.0
    value = float(statistic(x))
    return value if np.isfinite(value) else 0.0


def _skewness(x: np.ndarray) -> float:
    return _shape_moment(lambda v: skew(v, bias=True), x)


def _kurtosis(x: np.ndarray) -> float:
    return _shape_moment(lambda v: kurtosis(v, fisher=True, bias=True), x)


def _autocorrelation(lag: int) -> Callable[[np.ndarray], float]:
    def statistic(x: np.ndarray) -> float:
        if _is_constant(x) or lag >= x.size:
            return 0.0
        centered = x - x.mean()
        lagged = np.dot(centered[:-lag], centered[lag:])
        return float(lagged / np.dot(centered, centered))

    return statistic


def _trend_slope(x: np.ndarray) -> float:
    return float(linregress(np.arange(x.size, dtype=np.float64), x).slope)


def _longest_run_above_mean(x: np.ndarray) -> float:
    above = x > x.mean()
    runs = [len(list(group)) for flag, group in itertools.groupby(above) if flag]
    return float(max(runs, default=0))


GENERIC_STATISTICS: dict[str, Callable[[np.ndarray], float]] = {
    "mean": lambda x: float(np.mean(x)),
    "variance": lambda x: float(np.var(x)),
    "min": lambda x: float(np.min(x)),
    "max": lambda x: float(np.max(x)),
    "median": lambda x: float(np.median(x)),
    "skewness": _skewness,
    "kurtosis": _kurtosis,
    **{f"autocorr_lag{lag:02d}": _autocorrelation(lag) for lag in AUTOCORR_LAGS},
    "trend_slope": _trend_slope,
    "count_above_mean": lambda x: float(np.sum(x > x.mean())),
    "count_below_mean": lambda x: float(np.sum(x < x.mean())),
    "longest_run_above_mean": _longest_run_above_mean,
    "energy": lambda x: float(np.dot(x, x)),
    "mean_abs_change": lambda x: float(np.mean(np.abs(np.diff(x)))),
}

DEFAULT_GENERIC_BANK: tuple[str, ...] = tuple(GENERIC_STATISTICS)


def resolve_generic_bank(ids: Sequence[str]) -> list[Callable[[np.ndarray], float]]:
    """Statistic functions for ``ids``; unknown ids raise ``ConfigError``."""
    unknown = [i for i in ids if i not in GENERIC_STATISTICS]
    if unknown:
        msg = f"unknown generic statistics: {unknown}"
        raise ConfigError(msg)
    return [GENERIC_STATISTICS[i] for i in ids]


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


def default_windows() -> list[tuple[int, int]]:
    return [(start, 2) for start in range(0, N_MONTHS, 2)]


class FeatureConfig(NtlConfig):
    """Enabled families and their parameters.

    The default windows (12 two-month windows) give 36 fixed-interval
    features; the default generic bank has 25 statistics.
    """

    families: list[FeatureFamily] = Field(default_factory=lambda: list(FeatureFamily))
    generic_bank: list[str] = Field(default_factory=lambda: list(DEFAULT_GENERIC_BANK))
    fixed_interval_windows: list[tuple[int, int]] = Field(
        default_factory=default_windows
    )

    @field_validator("families")
    @classmethod
    def _check_families(cls, value: list[FeatureFamily]) -> list[FeatureFamily]:
        if not value:
            raise ValueError("at least one feature family must be enabled")
        if len(set(value)) != len(value):
            raise ValueError("feature families must not repeat")
        return value

    @field_validator("fixed_interval_windows")
    @classmethod
    def _check_windows(cls, value: list[tuple[int, int]]) -> list[tuple[int, int]]:
        for start, length in value:
            if start < 0 or length < 1 or start + length > N_MONTHS:
                msg = f"window ({start}, {length}) does not lie within [0, {N_MONTHS})"
                raise ValueError(msg)
        return value

    def enabled(self, family: FeatureFamily) -> bool:
        return family in self.families


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


def intra_year_difference(series: MonthlyTimeSeries) -> np.ndarray:
    """Same-month change between the two years: ``x[t+12] - x[t]``, t = 0..11."""
    x = series.values()
    return x[MONTHS_PER_YEAR:] - x[:MONTHS_PER_YEAR]


def intra_year_seasonal_difference(series: MonthlyTimeSeries) -> np.ndarray:
    """First difference of the intra-year difference vector (11 values)."""
    return np.diff(intra_year_difference(series))


def daily_average_features(series: MonthlyTimeSeries) -> np.ndarray:
    """kWh/day of the 23 most recent months (the oldest month is dropped)."""
    return series.daily_averages()[1:]


def fixed_interval_features(
    series: MonthlyTimeSeries, config: FeatureConfig
) -> np.ndarray:
    """Mean, standard deviation and maximum of the daily averages per window."""
    daily = series.daily_averages()
    values: list[float] = []
    for start, length in config.fixed_interval_windows:
        window = daily[start : start + length]
        values += [float(window.mean()), float(window.std()), float(window.max())]
    return np.asarray(values, dtype=np.float64)


def generic_features(series: MonthlyTimeSeries, config: FeatureConfig) -> np.ndarray:
    """The configured statistic bank over the raw readings."""
    if not config.generic_bank:
        raise ConfigError("the generic statistic bank is empty")
    x = series.values()
    return np.asarray(
        [statistic(x) for statistic in resolve_generic_bank(config.generic_bank)],
        dtype=np.float64,
    )


def family_names(family: FeatureFamily, config: FeatureConfig) -> list[str]:
    """Feature names of one family under ``config``."""
    match family:
        case FeatureFamily.DAILY_AVERAGE:
            return [f"{family}_m{t + 1:02d}" for t in range(1, N_MONTHS)]
        case FeatureFamily.FIXED_INTERVAL:
            return [
                f"{family}_w{k:02d}_{stat}"
                for k in range(len(config.fixed_interval_windows))
                for stat in ("mean", "std", "max")
            ]
        case FeatureFamily.GENERIC:
            return [f"{family}_{stat}" for stat in config.generic_bank]
        case FeatureFamily.INTRA_YEAR_DIFF:
            return [f"{family}_{t:02d}" for t in range(MONTHS_PER_YEAR)]
        case FeatureFamily.INTRA_YEAR_SEASONAL_DIFF:
            return [f"{family}_{t:02d}" for t in range(MONTHS_PER_YEAR - 1)]
    msg = f"unknown feature family {family!r}"
    raise ConfigError(msg)


def feature_names(config: FeatureConfig) -> list[str]:
    """Names of all enabled features, in extraction order."""
    return [
        name
        for family in FeatureFamily
        if config.enabled(family)
        for name in family_names(family, config)
    ]


def _family_values(
    family: FeatureFamily, series: MonthlyTimeSeries, config: FeatureConfig
) -> np.ndarray:
    match family:
        case FeatureFamily.DAILY_AVERAGE:
            return daily_average_features(series)
        case FeatureFamily.FIXED_INTERVAL:
            return fixed_interval_features(series, config)
        case FeatureFamily.GENERIC:
            return generic_features(series, config)
        case FeatureFamily.INTRA_YEAR_DIFF:
            return intra_year_difference(series)
        case FeatureFamily.INTRA_YEAR_SEASONAL_DIFF:
            return intra_year_seasonal_difference(series)
    msg = f"unknown feature family {family!r}"
    raise ConfigError(msg)


def extract_features(
    series: MonthlyTimeSeries, config: FeatureConfig
) -> tuple[np.ndarray, list[str]]:
    """Concatenated feature vector of all enabled families plus the names."""
    parts = [
        _family_values(family, series, config)
        for family in FeatureFamily
        if config.enabled(family)
    ]
    return np.concatenate(parts), feature_names(config)


def _extract_block(
    block: Sequence[MonthlyTimeSeries], config: FeatureConfig
) -> np.ndarray:
    return np.vstack([extract_features(s, config)[0] for s in block])


def extract_feature_matrix(
    series: Sequence[MonthlyTimeSeries],
    config: FeatureConfig,
    *,
    n_jobs: int = 1,
    block_size: int = 1000,
) -> tuple[np.ndarray, list[str]]:
    """Feature matrix over many customers, rows in input order."""
    names = feature_names(config)
    if not series:
        return np.empty((0, len(names))), names
    blocks = [series[i : i + block_size] for i in range(0, len(series), block_size)]
    parts = Parallel(n_jobs=n_jobs)(delayed(_extract_block)(b, config) for b in blocks)
    matrix = np.vstack(parts)
    logger.info(
        "Extracted %d features for %d customers", matrix.shape[1], matrix.shape[0]
    )
    return matrix, names


def featurize(
    dataset: LabeledDataset,
    series: Sequence[MonthlyTimeSeries],
    config: FeatureConfig,
    *,
    n_jobs: int = 1,
) -> LabeledDataset:
    """Replace the raw readings of ``dataset`` with the extracted features."""
    if [s.customer_id for s in series] != list(dataset.customer_ids):
        raise DataError("series and dataset must list the same customers in order")
    matrix, names = extract_feature_matrix(series, config, n_jobs=n_jobs)
    return dataset.with_features(matrix, names)


def family_of(feature_name: str) -> FeatureFamily:
    """Family a feature name belongs to."""
    # longest id first so no family id shadows another one
    for family in sorted(FeatureFamily, key=lambda f: len(f.value), reverse=True):
        if feature_name.startswith(f"{family.value}_"):
            return family
    msg = f"feature {feature_name!r} belongs to no feature family"
    raise DataError(msg)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def select_dataset_features(
    dataset: LabeledDataset, alpha: float = 0.05
) -> tuple[LabeledDataset, SelectionResult]:
    """Keep the features whose Fisher/KS p-value is below ``alpha``."""
    labels = dataset.require_labels()
    try:
        result = select_features(dataset.features, labels, alpha)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    logger.info(
        "Kept %d of %d features (alpha=%g)",
        result.n_retained,
        dataset.n_features,
        alpha,
    )
    return dataset.select_features(result.retained_mask), result


def selection_summary(
    names: Sequence[str], result: SelectionResult
) -> dict[str, dict[str, int]]:
    """Feature counts per family before and after selection."""
    summary: dict[str, dict[str, int]] = {}
    for name, kept in zip(names, result.retained_mask, strict=True):
        counts = summary.setdefault(family_of(name).value, {"before": 0, "after": 0})
        counts["before"] += 1
        counts["after"] += int(kept)
    for family, counts in summary.items():
        logger.info("%s: %d -> %d features", family, counts["before"], counts["after"])
    return summary


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def write_feature_matrix(
    dataset: LabeledDataset, path: Path, *, config_digest: str | None = None
) -> None:
    """CSV with ``customer_id`` plus one column per feature."""
    rows = [
        [cid, *values]
        for cid, values in zip(
            dataset.customer_ids, dataset.features.tolist(), strict=True
        )
    ]
    write_csv(
        ["customer_id", *dataset.feature_names],
        rows,
        path,
        config_digest=config_digest,
    )


def write_selection_report(
    names: Sequence[str],
    result: SelectionResult,
    path: Path,
    *,
    config_digest: str | None = None,
) -> None:
    """CSV ``feature_name, test, p_value, retained``."""
    rows = [
        [name, test.value, float(p), bool(kept)]
        for name, test, p, kept in zip(
            names, result.test_used, result.p_values, result.retained_mask, strict=True
        )
    ]
    write_csv(
        ["feature_name", "test", "p_value", "retained"],
        rows,
        path,
        config_digest=config_digest,
    )
