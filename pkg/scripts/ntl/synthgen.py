"""Synthetic customer populations with a known inspection bias.

A population is drawn with regions, customer classes, NTL labels and 24
monthly readings (seasonal baseline × class scale × lognormal noise, NTL
customers dropping to a fraction of their consumption from an onset month).
Inspections are then sampled with a log-linear selection model in label,
region, class and consumption level, so every training example has a known
selection probability and the ideal correction weight is its inverse.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from pydantic import Field, model_validator

from scripts.ntl.errors import ConfigError
from scripts.ntl.ingest import save_dataset
from scripts.ntl.models import (
    N_MONTHS,
    LabeledDataset,
    MonthlyTimeSeries,
    NtlConfig,
    write_csv,
)

logger = logging.getLogger(__name__)

# Billing-period lengths of one calendar year, repeated for the second year
CALENDAR_DAYS = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)


class SynthConfig(NtlConfig):
    """Population, consumption and selection model of a synthetic dataset.

    Selection: ``log p = intercept + label_effect*y + region_effects[r]
    + class_effects[c] + consumption_effect*z`` capped at 1, with ``z`` the
    standardized log mean consumption. The intercept is chosen so that the
    most favoured stratum (at ``z = 0``) is inspected with probability
    ``max_selection_probability``.
    """

    population: int = Field(default=20_000, ge=100)
    region_mixture: list[float] = Field(default_factory=lambda: [0.2] * 5)
    class_mixture: list[float] = Field(default_factory=lambda: [0.6, 0.3, 0.1])
    ntl_rate: float = Field(default=0.08, gt=0, lt=1)
    # per (region, class); overrides ntl_rate when given
    ntl_rates: list[list[float]] | None = None

    class_scale: list[float] = Field(default_factory=lambda: [150.0, 450.0, 1500.0])
    seasonal_amplitude: list[float] = Field(
        default_factory=lambda: [0.10, 0.15, 0.20, 0.25, 0.30]
    )
    seasonal_phase: list[float] = Field(
        default_factory=lambda: [0.0, 1.0, 2.0, 3.0, 4.0]
    )
    noise_sigma: float = Field(default=0.25, ge=0)
    drop_factor: float = Field(default=0.7, gt=0, le=1)
    onset_month: int = Field(default=12, ge=0, lt=N_MONTHS)
    onset_jitter: int = Field(default=3, ge=0)

    label_effect: float = math.log(6.19)
    region_effects: list[float] = Field(
        default_factory=lambda: [math.log(v) for v in (4.0, 2.828, 2.0, 1.414, 1.0)]
    )
    class_effects: list[float] = Field(
        default_factory=lambda: [math.log(v) for v in (3.0, 1.732, 1.0)]
    )
    consumption_effect: float = 0.0
    max_selection_probability: float = Field(default=0.95, gt=0, le=1)

    seed: int = 0

    @model_validator(mode="after")
    def _check_shapes(self) -> SynthConfig:
        for name, mixture in (
            ("region_mixture", self.region_mixture),
            ("class_mixture", self.class_mixture),
        ):
            if not mixture or any(not 0 < p <= 1 for p in mixture):
                msg = f"{name} entries must lie in (0, 1]"
                raise ValueError(msg)
            if abs(math.fsum(mixture) - 1.0) > 1e-9:
                msg = f"{name} must sum to 1"
                raise ValueError(msg)
        n_regions, n_classes = len(self.region_mixture), len(self.class_mixture)
        for name, values, expected in (
            ("seasonal_amplitude", self.seasonal_amplitude, n_regions),
            ("seasonal_phase", self.seasonal_phase, n_regions),
            ("region_effects", self.region_effects, n_regions),
            ("class_scale", self.class_scale, n_classes),
            ("class_effects", self.class_effects, n_classes),
        ):
            if len(values) != expected:
                msg = f"{name} needs {expected} values, got {len(values)}"
                raise ValueError(msg)
        if any(not 0 <= a < 1 for a in self.seasonal_amplitude):
            raise ValueError("seasonal amplitudes must lie in [0, 1)")
        if any(s <= 0 for s in self.class_scale):
            raise ValueError("class scales must be positive")
        if self.ntl_rates is not None:
            shape = (len(self.ntl_rates), {len(row) for row in self.ntl_rates})
            if shape != (n_regions, {n_classes}):
                raise ValueError("ntl_rates must be a regions × classes table")
            if any(not 0 < p < 1 for row in self.ntl_rates for p in row):
                raise ValueError("ntl_rates entries must lie in (0, 1)")
        return self

    @property
    def n_regions(self) -> int:
        return len(self.region_mixture)

    @property
    def n_classes(self) -> int:
        return len(self.class_mixture)

    def rate_table(self) -> np.ndarray:
        if self.ntl_rates is not None:
            return np.asarray(self.ntl_rates, dtype=np.float64)
        return np.full((self.n_regions, self.n_classes), self.ntl_rate)

    def selection_intercept(self) -> float:
        top = (
            max(self.label_effect, 0.0)
            + max(self.region_effects)
            + max(self.class_effects)
        )
        return math.log(self.max_selection_probability) - top


PRESETS: dict[str, dict[str, Any]] = {
    "ntl-default": {},
    "separable": {
        "population": 3000,
        "ntl_rate": 0.25,
        "noise_sigma": 0.05,
        "drop_factor": 0.2,
        "onset_jitter": 0,
        "label_effect": math.log(2.0),
        "region_effects": [0.0] * 5,
        "class_effects": [0.0] * 3,
        "max_selection_probability": 0.8,
    },
}


def synth_config(preset: str = "ntl-default", **overrides: Any) -> SynthConfig:
    """Preset configuration with keyword overrides."""
    try:
        values = dict(PRESETS[preset])
    except KeyError:
        msg = f"unknown synth preset {preset!r} (known: {sorted(PRESETS)})"
        raise ConfigError(msg) from None
    values.update(overrides)
    return SynthConfig(**values)


def region_name(k: int) -> str:
    return f"R{k + 1}"


def class_name(k: int) -> str:
    return f"C{k + 1}"


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SynthTruth:
    """Per-customer labels, strata and inspection probabilities.

    ``selected`` is set once a training sample has been drawn.
    """

    customer_ids: tuple[str, ...]
    labels: np.ndarray
    region_index: np.ndarray
    class_index: np.ndarray
    selection_probability: np.ndarray
    n_regions: int
    n_classes: int
    selected: np.ndarray | None = None

    def __post_init__(self) -> None:
        p = self.selection_probability
        if not (np.all(p > 0) and np.all(p <= 1)):
            raise ValueError("selection probabilities must lie in (0, 1]")

    def priors(self, mask: np.ndarray | None = None) -> dict[str, dict[str, float]]:
        """Label, region and class shares of the population (or of ``mask``)."""
        idx = np.ones(self.labels.size, dtype=bool) if mask is None else mask
        n = max(int(idx.sum()), 1)

        def shares(values: np.ndarray, names: list[str]) -> dict[str, float]:
            counts = np.bincount(values[idx], minlength=len(names))
            return {name: int(c) / n for name, c in zip(names, counts, strict=True)}

        return {
            "label": shares(self.labels.astype(np.intp), ["0", "1"]),
            "region": shares(
                self.region_index, [region_name(k) for k in range(self.n_regions)]
            ),
            "customer_class": shares(
                self.class_index, [class_name(k) for k in range(self.n_classes)]
            ),
        }

    def training_priors(self) -> dict[str, dict[str, float]]:
        if self.selected is None:
            raise ValueError("no training sample has been drawn")
        return self.priors(self.selected)


class Population(NamedTuple):
    dataset: LabeledDataset
    series: list[MonthlyTimeSeries]
    truth: SynthTruth


class TrainingSample(NamedTuple):
    dataset: LabeledDataset
    series: list[MonthlyTimeSeries]
    truth: SynthTruth


def _streams(seed: int) -> list[np.random.Generator]:
    """Independent generators for strata, consumption and selection."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)]


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _readings(
    cfg: SynthConfig,
    rng: np.random.Generator,
    regions: np.ndarray,
    classes: np.ndarray,
    labels: np.ndarray,
) -> np.ndarray:
    n = regions.size
    t = np.arange(N_MONTHS)
    days = np.asarray(CALENDAR_DAYS * 2, dtype=np.float64)
    amplitude = np.asarray(cfg.seasonal_amplitude)[regions, None]
    phase = np.asarray(cfg.seasonal_phase)[regions, None]
    seasonal = 1.0 + amplitude * np.sin(2 * np.pi * (t + phase) / 12.0)
    daily_base = (np.asarray(cfg.class_scale) / 30.0)[classes, None]
    noise = rng.lognormal(mean=0.0, sigma=cfg.noise_sigma, size=(n, N_MONTHS))
    readings = daily_base * days * seasonal * noise

    jitter = rng.integers(-cfg.onset_jitter, cfg.onset_jitter + 1, size=n)
    onset = np.clip(cfg.onset_month + jitter, 0, N_MONTHS - 1)
    dropped = (t[None, :] >= onset[:, None]) & (labels[:, None] == 1)
    return np.where(dropped, readings * cfg.drop_factor, readings)


def _selection_probability(
    cfg: SynthConfig,
    regions: np.ndarray,
    classes: np.ndarray,
    labels: np.ndarray,
    readings: np.ndarray,
) -> np.ndarray:
    level = np.log(readings.mean(axis=1))
    spread = level.std()
    z = (level - level.mean()) / spread if spread > 0 else np.zeros_like(level)
    log_p = (
        cfg.selection_intercept()
        + cfg.label_effect * labels
        + np.asarray(cfg.region_effects)[regions]
        + np.asarray(cfg.class_effects)[classes]
        + cfg.consumption_effect * z
    )
    return np.minimum(np.exp(log_p), 1.0)


def generate_population(cfg: SynthConfig) -> Population:
    """Draw a labeled population; bit-reproducible given ``cfg``."""
    strata_rng, consumption_rng, _ = _streams(cfg.seed)
    n = cfg.population
    regions = strata_rng.choice(cfg.n_regions, size=n, p=cfg.region_mixture)
    classes = strata_rng.choice(cfg.n_classes, size=n, p=cfg.class_mixture)
    rates = cfg.rate_table()[regions, classes]
    labels = (strata_rng.random(n) < rates).astype(np.int8)
    readings = _readings(cfg, consumption_rng, regions, classes, labels)

    ids = tuple(f"cust{i:06d}" for i in range(n))
    days = CALENDAR_DAYS * 2
    series = [
        MonthlyTimeSeries(customer_id=cid, readings=tuple(row), period_days=days)
        for cid, row in zip(ids, readings.tolist(), strict=True)
    ]
    dataset = LabeledDataset(
        customer_ids=ids,
        features=readings,
        labels=labels,
        regions=tuple(region_name(k) for k in regions.tolist()),
        customer_classes=tuple(class_name(k) for k in classes.tolist()),
        feature_names=tuple(f"m{t:02d}" for t in range(1, N_MONTHS + 1)),
    )
    truth = SynthTruth(
        customer_ids=ids,
        labels=labels,
        region_index=regions,
        class_index=classes,
        selection_probability=_selection_probability(
            cfg, regions, classes, labels, readings
        ),
        n_regions=cfg.n_regions,
        n_classes=cfg.n_classes,
    )
    logger.info("Generated %d customers, NTL share %.3f", n, float(labels.mean()))
    return Population(dataset, series, truth)


def sample_biased_training(population: Population, cfg: SynthConfig) -> TrainingSample:
    """Inspect every customer independently with its selection probability."""
    *_, selection_rng = _streams(cfg.seed)
    truth = population.truth
    selected = selection_rng.random(truth.labels.size) < truth.selection_probability
    idx = np.flatnonzero(selected)
    truth = replace(truth, selected=selected)
    training = population.dataset.subset(idx)
    logger.info(
        "Selected %d of %d customers for training, NTL share %.3f",
        idx.size,
        truth.labels.size,
        float(truth.labels[idx].mean()) if idx.size else 0.0,
    )
    return TrainingSample(training, [population.series[i] for i in idx], truth)


def oracle_weights(
    truth: SynthTruth, selected_ids: list[str] | tuple[str, ...]
) -> np.ndarray:
    """Inverse selection probabilities of ``selected_ids``, normalized to mean 1."""
    position = {cid: i for i, cid in enumerate(truth.customer_ids)}
    try:
        idx = np.asarray([position[cid] for cid in selected_ids], dtype=np.intp)
    except KeyError as exc:
        msg = f"unknown customer id {exc.args[0]!r}"
        raise ValueError(msg) from None
    weights = 1.0 / truth.selection_probability[idx]
    return weights / weights.mean()


# ---------------------------------------------------------------------------
# Writers
# ---------------------------------------------------------------------------


def write_truth(truth: SynthTruth, path: Path) -> None:
    """``truth.csv``: strata, label and selection probability per customer."""
    selected = truth.selected
    rows = [
        [
            cid,
            region_name(int(truth.region_index[i])),
            class_name(int(truth.class_index[i])),
            int(truth.labels[i]),
            float(truth.selection_probability[i]),
            None if selected is None else bool(selected[i]),
        ]
        for i, cid in enumerate(truth.customer_ids)
    ]
    headers = [
        "customer_id",
        "region",
        "customer_class",
        "label",
        "selection_probability",
        "selected",
    ]
    write_csv(headers, rows, path)


def write_synthetic(
    population: Population, training: TrainingSample, out_dir: Path
) -> dict[str, Path]:
    """Write ``train.csv``, ``reference.csv`` and ``truth.csv`` to ``out_dir``."""
    paths = {
        "train": out_dir / "train.csv",
        "reference": out_dir / "reference.csv",
        "truth": out_dir / "truth.csv",
    }
    save_dataset(training.dataset, training.series, paths["train"])
    save_dataset(population.dataset, population.series, paths["reference"])
    write_truth(training.truth, paths["truth"])
    return paths
