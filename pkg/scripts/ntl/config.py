"""Run configuration: one flat TOML file, overridable from the command line.

Example::

    seed = 7
    train_csv = "data/train.csv"
    reference_csv = "data/reference.csv"
    out_dir = "out"
    ladder = ["none", "class_imbalance", "class_imbalance+spatial"]
    forest_models = 20

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import tomllib
from pathlib import Path
from typing import Any

from pydantic import Field, ValidationError, model_validator

from scripts.ntl.errors import ConfigError
from scripts.ntl.evaluation import SearchOptions, parse_ladder
from scripts.ntl.features import (
    DEFAULT_GENERIC_BANK,
    FeatureConfig,
    default_windows,
    resolve_generic_bank,
)
from scripts.ntl.ingest import DEFAULT_MAX_REJECT_FRACTION
from scripts.ntl.models import FeatureFamily, IngestSchema, NtlConfig
from scripts.ntl.weights import DEFAULT_CLIP, WeightOptions, parse_bias
from tools.density import KdeSearchSpec, Kernel

logger = logging.getLogger(__name__)

PATH_KEYS = ("train_csv", "reference_csv", "out_dir")
# keys that do not change any result and stay out of the digest
UNDIGESTED_KEYS = {"threads", "out_dir"}

DEFAULT_LADDER = [
    "none",
    "class_imbalance",
    "class_imbalance+spatial",
    "class_imbalance+spatial+customer_class",
]


class RunConfig(NtlConfig):
    """Every setting of a pipeline run; only ``seed`` is mandatory."""

    seed: int = Field(ge=0, lt=2**64)
    train_csv: Path | None = None
    reference_csv: Path | None = None
    out_dir: Path = Path("out")
    # worker processes, 0 = all cores
    threads: int = Field(default=1, ge=0)

    # ingestion
    max_reject_fraction: float = Field(
        default=DEFAULT_MAX_REJECT_FRACTION, ge=0, le=1
    )
    extra_attributes: list[str] = Field(default_factory=list)

    # features and selection
    families: list[FeatureFamily] = Field(default_factory=lambda: list(FeatureFamily))
    generic_bank: list[str] = Field(default_factory=lambda: list(DEFAULT_GENERIC_BANK))
    fixed_interval_windows: list[tuple[int, int]] = Field(
        default_factory=default_windows
    )
    alpha: float = Field(default=0.05, gt=0, lt=1)

    # density estimation
    kde_kernels: list[Kernel] = Field(default_factory=lambda: list(Kernel))
    kde_bandwidth_min: float = Field(default=0.001, gt=0)
    kde_bandwidth_max: float = Field(default=10.0, gt=0)
    kde_candidates: int = Field(default=100, ge=1)
    kde_folds: int = Field(default=5, ge=2)
    kde_max_samples: int | None = Field(default=2000, ge=2)

    # weights
    biases: list[str] = Field(
        default_factory=lambda: ["class_imbalance", "spatial", "customer_class"]
    )
    feature_shifts: list[str] = Field(default_factory=list)
    clip_min: float = Field(default=DEFAULT_CLIP[0], gt=0)
    clip_max: float = Field(default=DEFAULT_CLIP[1], gt=0)
    target_priors: dict[int, float] | None = None

    # forest search and ladder
    ladder: list[str] = Field(default_factory=lambda: list(DEFAULT_LADDER))
    forest_models: int = Field(default=100, ge=1)
    forest_folds: int = Field(default=10, ge=2)
    n_estimators: int = Field(default=20, ge=1)
    weighted_bootstrap: bool = True
    estimated_unbiased_auc: bool = False

    # synthetic data
    synth_preset: str = "ntl-default"
    synth_population: int | None = Field(default=None, ge=100)

    @model_validator(mode="after")
    def _check_ranges(self) -> RunConfig:
        if self.clip_min > self.clip_max:
            raise ValueError("clip_min must not exceed clip_max")
        if self.kde_bandwidth_min > self.kde_bandwidth_max:
            raise ValueError("kde_bandwidth_min must not exceed kde_bandwidth_max")
        return self

    # -- derived settings ----------------------------------------------------

    @property
    def n_jobs(self) -> int:
        """joblib worker count (``-1`` = all cores)."""
        return self.threads or -1

    def schema(self, *, labeled: bool = True) -> IngestSchema:
        schema = IngestSchema(extra_columns=list(self.extra_attributes))
        return schema if labeled else schema.unlabeled()

    def feature_config(self) -> FeatureConfig:
        return FeatureConfig(
            families=list(self.families),
            generic_bank=list(self.generic_bank),
            fixed_interval_windows=list(self.fixed_interval_windows),
        )

    def kde_spec(self) -> KdeSearchSpec:
        return KdeSearchSpec(
            kernels=list(self.kde_kernels),
            bandwidth_range=(self.kde_bandwidth_min, self.kde_bandwidth_max),
            n_candidates=self.kde_candidates,
            folds=self.kde_folds,
            seed=self.seed,
            max_samples=self.kde_max_samples,
        )

    def weight_options(self) -> WeightOptions:
        return WeightOptions(
            target_priors=self.target_priors,
            clip=(self.clip_min, self.clip_max),
            kde=self.kde_spec(),
        )

    def search_options(self) -> SearchOptions:
        return SearchOptions(
            n_models=self.forest_models,
            folds=self.forest_folds,
            n_estimators=self.n_estimators,
            weighted_bootstrap=self.weighted_bootstrap,
            estimated_unbiased_auc=self.estimated_unbiased_auc,
        )

    def bias_list(self) -> list[str]:
        """Biases of the ``weights``/``train`` commands plus the feature shifts."""
        names = [*self.biases, *(f"feature:{f}" for f in self.feature_shifts)]
        for name in names:
            parse_bias(name)
        return names

    def ladder_steps(self) -> list[tuple[str, ...]]:
        return parse_ladder(self.ladder)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON of every result-relevant key."""
        payload = self.model_dump(mode="json", exclude=UNDIGESTED_KEYS)
        for key in PATH_KEYS:
            if payload.get(key) is not None:
                payload[key] = Path(payload[key]).as_posix()
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _read_toml(path: Path) -> dict[str, Any]:
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError:
        msg = f"config file {path} does not exist"
        raise ConfigError(msg) from None
    except tomllib.TOMLDecodeError as exc:
        msg = f"{path}: {exc}"
        raise ConfigError(msg) from exc
    base = path.parent
    for key in PATH_KEYS:
        value = data.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            data[key] = str(base / value)
    return data


def load_config(
    path: Path | None = None, overrides: dict[str, Any] | None = None
) -> RunConfig:
    """Read ``path`` (if any) and apply the non-``None`` ``overrides``."""
    data = _read_toml(path) if path is not None else {}
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if "seed" not in data:
        raise ConfigError("seed is mandatory (config key or --seed)")
    try:
        config = RunConfig.model_validate(data)
        config.feature_config()
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    resolve_generic_bank(config.generic_bank)
    config.bias_list()
    config.ladder_steps()
    try:
        config.weight_options()
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from exc
    logger.debug("Config digest %s", config.digest())
    return config


def _describe(exc: ValidationError) -> str:
    parts = []
    for error in exc.errors():
        location = ".".join(str(p) for p in error["loc"]) or "config"
        parts.append(f"{location}: {error['msg']}")
    return "; ".join(parts)
