from __future__ import annotations

from pathlib import Path

import pytest

from scripts.ntl.config import DEFAULT_LADDER, load_config
from scripts.ntl.errors import ConfigError
from scripts.ntl.models import FeatureFamily


def write_config(tmp_path: Path, *lines: str) -> Path:
    path = tmp_path / "run.toml"
    path.write_text("\n".join([*lines, ""]), encoding="utf-8")
    return path


def test_seed_is_mandatory(tmp_path):
    with pytest.raises(ConfigError, match="seed"):
        load_config(write_config(tmp_path, 'out_dir = "x"'))
    with pytest.raises(ConfigError):
        load_config()


def test_seed_from_overrides_only():
    config = load_config(overrides={"seed": 3, "threads": None})
    assert config.seed == 3
    assert config.threads == 1
    assert config.ladder == DEFAULT_LADDER
    assert config.families == list(FeatureFamily)


def test_overrides_win_over_the_file(tmp_path):
    path = write_config(tmp_path, "seed = 1", "forest_models = 4")
    config = load_config(path, {"seed": 9})
    assert (config.seed, config.forest_models) == (9, 4)


def test_relative_paths_follow_the_config_file(tmp_path):
    path = write_config(
        tmp_path, "seed = 1", 'train_csv = "data/train.csv"', 'out_dir = "/abs/out"'
    )
    config = load_config(path)
    assert config.train_csv == tmp_path / "data" / "train.csv"
    assert config.out_dir == Path("/abs/out")
    assert config.reference_csv is None


def test_digest_ignores_threads_and_output_directory():
    base = load_config(overrides={"seed": 1})
    assert load_config(overrides={"seed": 1, "threads": 8}).digest() == base.digest()
    other = load_config(overrides={"seed": 1, "out_dir": "elsewhere"})
    assert other.digest() == base.digest()
    assert load_config(overrides={"seed": 2}).digest() != base.digest()
    changed = load_config(overrides={"seed": 1, "forest_models": 3})
    assert changed.digest() != base.digest()


def test_threads_zero_means_all_cores():
    assert load_config(overrides={"seed": 0, "threads": 0}).n_jobs == -1
    assert load_config(overrides={"seed": 0, "threads": 3}).n_jobs == 3


@pytest.mark.parametrize(
    "line",
    [
        "colour = 1",
        'biases = ["weather"]',
        'generic_bank = ["entropy"]',
        'ladder = ["none", "class_imbalance+rain"]',
        "ladder = []",
        'families = ["wavelets"]',
        "clip_min = 25.0",
        "fixed_interval_windows = [[22, 4]]",
        "seed = -1",
        "seed = 1.5",
    ],
)
def test_invalid_settings_are_config_errors(tmp_path, line):
    lines = [line] if line.startswith("seed") else ["seed = 1", line]
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, *lines))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, "seed = = 1"))


def test_derived_options(tmp_path):
    path = write_config(
        tmp_path,
        "seed = 4",
        'feature_shifts = ["generic_mean"]',
        'extra_attributes = ["tariff"]',
        "forest_folds = 3",
        "target_priors = { 0 = 0.9, 1 = 0.1 }",
    )
    config = load_config(path)
    assert config.bias_list()[-1] == "feature:generic_mean"
    assert config.schema(labeled=False).label_column is None
    assert config.schema().extra_columns == ["tariff"]
    assert config.search_options().folds == 3
    assert config.weight_options().target_priors == {0: 0.9, 1: 0.1}
    assert config.kde_spec().seed == 4
