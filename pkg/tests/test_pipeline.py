from __future__ import annotations

import json

import pytest

from scripts.ntl.config import load_config
from scripts.ntl.errors import ConfigError, DataError
from scripts.ntl.models import read_config_digest, write_csv
from scripts.ntl.pipeline import (
    file_digest,
    load_report,
    needs_reference,
    prepare,
    run_synth,
    write_json,
    write_manifest,
)


def test_write_json_is_canonical(tmp_path):
    path = tmp_path / "a" / "x.json"
    write_json({"b": 1, "a": [1, 2]}, path)
    assert path.read_text(encoding="utf-8") == (
        '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'
    )


def test_manifest_lists_artifact_hashes(tmp_path):
    cfg = load_config(overrides={"seed": 3, "out_dir": tmp_path})
    artifact = tmp_path / "thing.csv"
    artifact.write_text("a\n1\n", encoding="utf-8")
    path = write_manifest("features", cfg, {"thing": artifact})
    manifest = json.loads(path.read_text(encoding="utf-8"))
    assert path.name == "manifest-features.json"
    assert manifest["config_digest"] == cfg.digest()
    assert manifest["artifacts"] == {
        "thing": {"path": "thing.csv", "sha256": file_digest(artifact)}
    }
    assert set(manifest["versions"]) >= {"python", "numpy", "scikit-learn"}


def test_needs_reference():
    assert not needs_reference([])
    assert not needs_reference(["class_imbalance"])
    assert needs_reference(["class_imbalance", "spatial"])
    assert needs_reference(["feature:generic_mean"])


def test_prepare_keeps_full_and_selected_views(synth_run_config):
    cfg = load_config(synth_run_config)
    run_synth(cfg)
    prepared, selection = prepare(cfg, ["spatial"])
    assert prepared.train.n_features == selection.n_retained > 0
    assert prepared.train_full.n_features == len(selection.retained_mask)
    assert prepared.reference.feature_names == prepared.train.feature_names
    assert prepared.reference_full.is_labeled


def test_prepare_needs_a_training_file(tmp_path):
    cfg = load_config(overrides={"seed": 0, "out_dir": tmp_path})
    with pytest.raises(ConfigError):
        prepare(cfg)


def test_load_report_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_report(tmp_path / "report.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"seed": 1}', encoding="utf-8")
    with pytest.raises(DataError):
        load_report(bad)


def test_csv_exports_can_carry_the_config_digest(tmp_path):
    path = tmp_path / "scores.csv"
    write_csv(["customer_id", "score"], [["c1", 0.25]], path, config_digest="ab12")
    assert path.read_text(encoding="utf-8") == (
        "# config_digest: ab12\ncustomer_id,score\nc1,0.25\n"
    )
    assert read_config_digest(path) == "ab12"

    write_csv(["customer_id", "score"], [["c1", 0.25]], path)
    assert read_config_digest(path) is None
