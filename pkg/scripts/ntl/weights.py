"""Per-bias correction weights and their harmonic-mean combination.

Each addressed bias contributes one weight column: the ratio of the target
(reference) probability to the training probability of the example's label,
category or feature value. Columns are clipped and combined per example with
the harmonic mean ``n / sum_k 1/w_k``, which stays close to the smallest
column and so damps single extreme ratios.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from pydantic import Field, field_validator
from scipy.stats import hmean

from scripts.ntl.errors import ConfigError, DataError
from scripts.ntl.models import BiasKind, LabeledDataset, NtlConfig, WeightSet, write_csv
from tools.density import DensityModel, KdeSearchSpec, kde_fit, kde_select

logger = logging.getLogger(__name__)

DEFAULT_CLIP = (0.05, 20.0)
RATIO_FLOOR = 1e-300
PRIOR_TOLERANCE = 1e-9

ATTRIBUTE_PREFIX = "attribute:"
FEATURE_PREFIX = "feature:"

# ---------------------------------------------------------------------------
# Class imbalance
# ---------------------------------------------------------------------------


class ClassPriorSpec(NtlConfig):
    """Training and target class priors, each summing to 1."""

    train_priors: dict[int, float]
    target_priors: dict[int, float]

    @field_validator("train_priors", "target_priors")
    @classmethod
    def _check_priors(cls, value: dict[int, float]) -> dict[int, float]:
        if any(not (math.isfinite(p) and p > 0) for p in value.values()):
            raise ValueError("class priors must be finite and positive")
        if abs(math.fsum(value.values()) - 1.0) > PRIOR_TOLERANCE:
            raise ValueError("class priors must sum to 1")
        return value

    @classmethod
    def from_labels(
        cls, labels: np.ndarray, target_priors: Mapping[int, float]
    ) -> ClassPriorSpec:
        """Training priors from the empirical class counts."""
        labels = np.asarray(labels)
        classes, counts = np.unique(labels, return_counts=True)
        train = {
            int(k): int(c) / labels.size
            for k, c in zip(classes, counts, strict=True)
        }
        return cls(train_priors=train, target_priors=dict(target_priors))


def empirical_priors(labels: np.ndarray) -> dict[int, float]:
    counts = np.bincount(np.asarray(labels, dtype=np.intp), minlength=2)
    return {0: counts[0] / counts.sum(), 1: counts[1] / counts.sum()}


def class_imbalance_weights(labels: np.ndarray, spec: ClassPriorSpec) -> np.ndarray:
    """``target_priors[y] / train_priors[y]`` per example."""
    labels = np.asarray(labels)
    weights = np.empty(labels.shape, dtype=np.float64)
    for k in np.unique(labels).tolist():
        train = spec.train_priors.get(int(k), 0.0)
        if train <= 0:
            msg = f"class {k} has no training prior"
            raise ValueError(msg)
        if int(k) not in spec.target_priors:
            msg = f"class {k} has no target prior"
            raise ValueError(msg)
        weights[labels == k] = spec.target_priors[int(k)] / train
    return weights


# ---------------------------------------------------------------------------
# Covariate shift
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CategoricalFrequencies:
    """Empirical category frequencies of one attribute."""

    attribute: str
    frequencies: dict[str, float]

    @classmethod
    def from_values(
        cls, attribute: str, values: Sequence[str]
    ) -> CategoricalFrequencies:
        if not values:
            msg = f"no values to count for {attribute!r}"
            raise ValueError(msg)
        counts = Counter(values)
        total = len(values)
        return cls(attribute, {k: c / total for k, c in sorted(counts.items())})

    def probability(self, values: Sequence[str]) -> np.ndarray:
        return np.asarray([self.frequencies.get(v, 0.0) for v in values])

    def to_json(self) -> dict[str, Any]:
        return {"attribute": self.attribute, "frequencies": self.frequencies}


@dataclass(frozen=True)
class FeatureDensity:
    """KDE of one numeric attribute, fitted on standardized values.

    ``probability`` returns the density in the original units.
    """

    attribute: str
    model: DensityModel
    center: float = 0.0
    scale: float = 1.0

    def probability(self, values: np.ndarray) -> np.ndarray:
        z = (np.asarray(values, dtype=np.float64) - self.center) / self.scale
        return self.model.density(z) / self.scale

    def to_json(self) -> dict[str, Any]:
        return {
            "attribute": self.attribute,
            "center": self.center,
            "scale": self.scale,
            **self.model.to_json(),
        }


DistributionModel = CategoricalFrequencies | FeatureDensity


@dataclass(frozen=True)
class CovariateShiftSpec:
    """Training and reference distribution of one attribute plus the clip range."""

    attribute: str
    train_model: DistributionModel
    reference_model: DistributionModel
    clip: tuple[float, float] = DEFAULT_CLIP

    def __post_init__(self) -> None:
        names = {self.train_model.attribute, self.reference_model.attribute}
        if names != {self.attribute}:
            msg = (
                f"models describe {self.train_model.attribute!r} and "
                f"{self.reference_model.attribute!r}, expected {self.attribute!r}"
            )
            raise ValueError(msg)
        if type(self.train_model) is not type(self.reference_model):
            raise ValueError("train and reference models must be of the same kind")
        check_clip(self.clip)


def check_clip(clip: tuple[float, float]) -> None:
    lo, hi = clip
    if not (0 < lo <= hi and math.isfinite(hi)):
        msg = f"clip range must satisfy 0 < lo <= hi, got {clip}"
        raise ValueError(msg)


def covariate_shift_weights(
    values: np.ndarray | Sequence[str], spec: CovariateShiftSpec
) -> np.ndarray:
    """Clipped density ratio ``p_reference(x) / p_train(x)`` per example."""
    reference = spec.reference_model.probability(values)
    train = spec.train_model.probability(values)
    ratio = reference / np.maximum(train, RATIO_FLOOR)
    return np.clip(ratio, *spec.clip)


def fit_feature_densities(
    attribute: str,
    train_values: np.ndarray,
    reference_values: np.ndarray,
    search: KdeSearchSpec,
    *,
    n_jobs: int = 1,
) -> tuple[FeatureDensity, FeatureDensity]:
    """Select and fit one KDE per distribution on a shared standardization."""
    train_values = np.asarray(train_values, dtype=np.float64)
    reference_values = np.asarray(reference_values, dtype=np.float64)
    center = float(reference_values.mean())
    scale = float(reference_values.std()) or 1.0

    fitted: list[FeatureDensity] = []
    for label, values in (("train", train_values), ("reference", reference_values)):
        z = (values - center) / scale
        try:
            selection = kde_select(z, search, n_jobs=n_jobs)
        except ValueError as exc:
            raise DataError(f"{attribute} ({label}): {exc}") from exc
        logger.info(
            "KDE %s (%s): %s, bandwidth %.4g",
            attribute,
            label,
            selection.kernel.value,
            selection.bandwidth,
        )
        model = kde_fit(z, selection.kernel, selection.bandwidth)
        fitted.append(FeatureDensity(attribute, model, center, scale))
    return fitted[0], fitted[1]


# ---------------------------------------------------------------------------
# Harmonic combination
# ---------------------------------------------------------------------------


def combine_weights_harmonic(per_bias: np.ndarray) -> np.ndarray:
    """Row-wise harmonic mean ``n / sum_k 1/w_ik``."""
    per_bias = np.asarray(per_bias, dtype=np.float64)
    if per_bias.ndim == 1:
        per_bias = per_bias[:, None]
    if per_bias.ndim != 2 or per_bias.shape[1] == 0:
        raise ValueError("need a matrix with at least one bias column")
    if not (np.all(np.isfinite(per_bias)) and np.all(per_bias > 0)):
        raise ValueError("weights must be finite and strictly positive")
    return hmean(per_bias, axis=1)


# ---------------------------------------------------------------------------
# Weight sets
# ---------------------------------------------------------------------------


class BiasSpec(NamedTuple):
    """A parsed bias name."""

    name: str
    kind: str
    attribute: str | None


def parse_bias(name: str) -> BiasSpec:
    """Resolve a bias name to its weight computation.

    ``class_imbalance``, ``spatial`` (region frequencies), ``customer_class``,
    ``attribute:<column>`` (extra categorical column) and ``feature:<name>``
    (KDE density ratio of a feature).
    """
    name = name.strip()
    if name == BiasKind.CLASS_IMBALANCE:
        return BiasSpec(name, "class", None)
    if name == BiasKind.SPATIAL:
        return BiasSpec(name, "categorical", "region")
    if name == BiasKind.CUSTOMER_CLASS:
        return BiasSpec(name, "categorical", "customer_class")
    if name.startswith(ATTRIBUTE_PREFIX) and name.removeprefix(ATTRIBUTE_PREFIX):
        return BiasSpec(name, "categorical", name.removeprefix(ATTRIBUTE_PREFIX))
    if name.startswith(FEATURE_PREFIX) and name.removeprefix(FEATURE_PREFIX):
        return BiasSpec(name, "feature", name.removeprefix(FEATURE_PREFIX))
    msg = f"unknown bias {name!r}"
    raise ConfigError(msg)


def weight_column_name(bias_name: str) -> str:
    """CSV header of a bias column (``w_class``, ``w_spatial``, ...)."""
    if bias_name == BiasKind.CLASS_IMBALANCE:
        return "w_class"
    return "w_" + bias_name.replace(":", "_")


class WeightOptions(NtlConfig):
    """Options of the weight builder."""

    target_priors: dict[int, float] | None = None
    clip: tuple[float, float] = DEFAULT_CLIP
    kde: KdeSearchSpec = Field(default_factory=KdeSearchSpec)

    @field_validator("clip")
    @classmethod
    def _check_clip(cls, value: tuple[float, float]) -> tuple[float, float]:
        check_clip(value)
        return value


@dataclass
class WeightBuilder:
    """Computes and caches bias columns for one training/reference pair.

    Columns are cached by bias name, so ladder steps sharing a bias reuse it.
    """

    dataset: LabeledDataset
    reference: LabeledDataset | None = None
    options: WeightOptions = field(default_factory=WeightOptions)
    n_jobs: int = 1
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    models: dict[str, dict[str, Any]] = field(default_factory=dict)

    def target_priors(self) -> dict[int, float]:
        if self.options.target_priors is not None:
            return dict(self.options.target_priors)
        if self.reference is not None and self.reference.labels is not None:
            priors = empirical_priors(self.reference.labels)
            if min(priors.values()) > 0:
                return priors
        return {0: 0.5, 1: 0.5}

    def _require_reference(self, bias: BiasSpec) -> LabeledDataset:
        if self.reference is None:
            msg = f"bias {bias.name!r} needs a reference population"
            raise ConfigError(msg)
        return self.reference

    def _compute(self, bias: BiasSpec) -> np.ndarray:
        clip = self.options.clip
        if bias.kind == "class":
            labels = self.dataset.require_labels()
            spec = ClassPriorSpec.from_labels(labels, self.target_priors())
            self.models[bias.name] = spec.model_dump(mode="json")
            try:
                return np.clip(class_imbalance_weights(labels, spec), *clip)
            except ValueError as exc:
                raise DataError(str(exc)) from exc

        reference = self._require_reference(bias)
        attribute = bias.attribute or ""
        if bias.kind == "categorical":
            train_values = self.dataset.categorical(attribute)
            shift = CovariateShiftSpec(
                attribute,
                CategoricalFrequencies.from_values(attribute, train_values),
                CategoricalFrequencies.from_values(
                    attribute, reference.categorical(attribute)
                ),
                clip,
            )
            values: Any = train_values
        else:
            values = self.dataset.column(attribute)
            train_model, reference_model = fit_feature_densities(
                attribute,
                values,
                reference.column(attribute),
                self.options.kde,
                n_jobs=self.n_jobs,
            )
            shift = CovariateShiftSpec(attribute, train_model, reference_model, clip)
        self.models[bias.name] = {
            "train": shift.train_model.to_json(),
            "reference": shift.reference_model.to_json(),
        }
        return covariate_shift_weights(values, shift)

    def column(self, bias_name: str) -> np.ndarray:
        """Clipped weight column of one bias."""
        bias = parse_bias(bias_name)
        if bias.name not in self.columns:
            column = self._compute(bias)
            _log_clip_hits(bias.name, column, self.options.clip)
            self.columns[bias.name] = column
        return self.columns[bias.name]

    def build(self, biases: Sequence[str]) -> WeightSet:
        """Weight set over ``biases`` combined with the harmonic mean."""
        if not biases:
            raise ConfigError("the bias list is empty")
        names = tuple(parse_bias(b).name for b in biases)
        per_bias = np.column_stack([self.column(name) for name in names])
        weights = WeightSet(
            customer_ids=self.dataset.customer_ids,
            bias_names=names,
            per_bias=per_bias,
            combined=combine_weights_harmonic(per_bias),
            clip=self.options.clip,
        )
        logger.info(
            "Weights [%s]: effective sample size %.1f of %d",
            " + ".join(names),
            weights.effective_sample_size(),
            len(weights.customer_ids),
        )
        return weights


def _log_clip_hits(name: str, column: np.ndarray, clip: tuple[float, float]) -> None:
    lo, hi = clip
    low = int(np.sum(column <= lo))
    high = int(np.sum(column >= hi))
    if low or high:
        logger.warning(
            "Weight column %s: %d values clipped at %g, %d at %g",
            name,
            low,
            lo,
            high,
            hi,
        )


def build_weight_set(
    dataset: LabeledDataset,
    reference: LabeledDataset | None,
    biases: Sequence[str],
    options: WeightOptions | None = None,
    *,
    n_jobs: int = 1,
) -> WeightSet:
    """Compute, clip and combine the requested bias columns.

    ``WeightSet.normalized`` holds the mean-1 training weights.
    """
    builder = WeightBuilder(dataset, reference, options or WeightOptions(), n_jobs)
    return builder.build(biases)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------


def weights_summary(weights: WeightSet) -> dict[str, Any]:
    """Effective sample sizes and ranges of every column."""
    columns = {
        name: weights.per_bias[:, k] for k, name in enumerate(weights.bias_names)
    }
    columns["combined"] = weights.combined
    return {
        "biases": list(weights.bias_names),
        "clip": list(weights.clip),
        "n_examples": len(weights.customer_ids),
        "columns": {
            name: {
                "effective_sample_size": weights.effective_sample_size(values),
                "min": float(values.min()),
                "max": float(values.max()),
                "mean": float(values.mean()),
            }
            for name, values in columns.items()
        },
    }


def write_weights(
    weights: WeightSet, path: Path, *, config_digest: str | None = None
) -> None:
    """CSV ``customer_id, w_<bias>..., w_combined``."""
    headers = [
        "customer_id",
        *(weight_column_name(b) for b in weights.bias_names),
        "w_combined",
    ]
    rows = [
        [cid, *row, combined]
        for cid, row, combined in zip(
            weights.customer_ids,
            weights.per_bias.tolist(),
            weights.combined.tolist(),
            strict=True,
        )
    ]
    write_csv(headers, rows, path, config_digest=config_digest)
