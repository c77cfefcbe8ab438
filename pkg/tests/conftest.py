from __future__ import annotations

import csv
from pathlib import Path

import hypothesis
import numpy as np
import pytest

from scripts.ntl.models import LabeledDataset, MonthlyTimeSeries
from scripts.ntl.synthgen import (
    generate_population,
    sample_biased_training,
    synth_config,
)

np.seterr(all="warn")

hypothesis.settings.register_profile("ntl", max_examples=50, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.load_profile("ntl")


READING_HEADER = [f"m{t:02d}" for t in range(1, 25)]
HEADER = ["customer_id", *READING_HEADER, "label", "region", "customer_class"]


def customer_row(
    customer_id: str,
    readings: list[object] | None = None,
    label: object = 0,
    region: str = "A",
    customer_class: str = "res",
) -> list[object]:
    readings = readings if readings is not None else [100.0] * 24
    return [customer_id, *readings, label, region, customer_class]


def write_rows(
    path: Path, rows: list[list[object]], header: list[str] = HEADER
) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def series_of(readings: list[float] | np.ndarray, days: int = 30) -> MonthlyTimeSeries:
    return MonthlyTimeSeries(
        customer_id="c1",
        readings=tuple(float(r) for r in readings),
        period_days=(days,) * 24,
    )


def make_dataset(
    features: np.ndarray,
    labels: np.ndarray | None,
    regions: list[str] | None = None,
    classes: list[str] | None = None,
    names: list[str] | None = None,
) -> LabeledDataset:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim == 1:
        features = features[:, None]
    n, d = features.shape
    return LabeledDataset(
        customer_ids=tuple(f"c{i:04d}" for i in range(n)),
        features=features,
        labels=None if labels is None else np.asarray(labels),
        regions=tuple(regions or ["A"] * n),
        customer_classes=tuple(classes or ["res"] * n),
        feature_names=tuple(names or [f"f{j}" for j in range(d)]),
    )


@pytest.fixture
def rows_csv(tmp_path: Path):
    """Writer for small customer CSV files under ``tmp_path``."""

    def write(rows: list[list[object]], header: list[str] = HEADER) -> Path:
        return write_rows(tmp_path / "customers.csv", rows, header)

    return write


@pytest.fixture(scope="session")
def separable_sample():
    """Small synthetic population with a strong NTL signal and its training sample."""
    cfg = synth_config("separable", population=600, seed=11)
    population = generate_population(cfg)
    return cfg, population, sample_biased_training(population, cfg)


@pytest.fixture
def synth_run_config(tmp_path: Path) -> Path:
    """Config of a fast end-to-end run on a small separable population."""
    path = tmp_path / "run.toml"
    path.write_text(
        "\n".join(
            [
                "seed = 5",
                'out_dir = "out"',
                'train_csv = "out/train.csv"',
                'reference_csv = "out/reference.csv"',
                'synth_preset = "separable"',
                "synth_population = 400",
                'families = ["intra_year_diff", "daily_average"]',
                'ladder = ["none", "class_imbalance", "class_imbalance+spatial"]',
                "forest_models = 2",
                "forest_folds = 3",
                "n_estimators = 3",
                "",
            ]
        ),
        encoding="utf-8",
    )
    return path
