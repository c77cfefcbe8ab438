from __future__ import annotations

import json

import pytest
from typer.testing import CliRunner

from scripts.cli import app
from scripts.ntl.models import read_config_digest
from tests.conftest import customer_row, write_rows

runner = CliRunner()


def invoke(*args: object):
    return runner.invoke(app, [str(a) for a in args])


def test_full_pipeline(synth_run_config):
    out = synth_run_config.parent / "out"

    result = invoke("synth", "-c", synth_run_config)
    assert result.exit_code == 0, result.output
    for name in ("train", "reference", "truth", "oracle_weights"):
        assert (out / f"{name}.csv").is_file()

    for command in ("features", "weights", "train", "ladder"):
        result = invoke(command, "-c", synth_run_config)
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / f"manifest-{command}.json").read_text())
        assert manifest["command"] == command
        assert manifest["seed"] == 5

    digest = json.loads((out / "manifest-weights.json").read_text())["config_digest"]
    exports = ("oracle_weights", "rejects", "features", "selection", "weights")
    for name in (*exports, "search", "scores"):
        assert read_config_digest(out / f"{name}.csv") == digest
    weights_header = (out / "weights.csv").read_text().splitlines()[1]
    assert weights_header == (
        "customer_id,w_class,w_spatial,w_customer_class,w_combined"
    )
    model = json.loads((out / "model.json").read_text())
    assert 0.0 <= model["cv_mean_auc"] <= 1.0
    assert (out / "scores.csv").is_file()

    report = json.loads((out / "report.json").read_text())
    assert len(report["configurations"]) == 3
    assert report["seed"] == 5

    result = invoke("report", "-c", synth_run_config)
    assert result.exit_code == 0, result.output
    table = (out / "report.txt").read_text()
    assert "class_imbalance + spatial" in table
    assert f"config_digest: {digest}" in table


def test_ladder_is_byte_identical_for_the_same_seed(synth_run_config):
    out = synth_run_config.parent / "out"
    assert invoke("synth", "-c", synth_run_config).exit_code == 0
    assert invoke("ladder", "-c", synth_run_config).exit_code == 0
    first = (out / "report.json").read_bytes()
    assert invoke("ladder", "-c", synth_run_config, "--threads", 2).exit_code == 0
    assert (out / "report.json").read_bytes() == first


def test_report_takes_the_seed_from_the_report(synth_run_config, tmp_path):
    out = synth_run_config.parent / "out"
    assert invoke("synth", "-c", synth_run_config).exit_code == 0
    assert invoke("ladder", "-c", synth_run_config).exit_code == 0
    result = invoke("report", out / "report.json", "-o", tmp_path / "rendered")
    assert result.exit_code == 0, result.output
    manifest = json.loads((tmp_path / "rendered" / "manifest-report.json").read_text())
    assert manifest["seed"] == 5


def test_missing_seed_is_a_config_error(tmp_path):
    result = invoke("features", "-o", tmp_path)
    assert result.exit_code == 2
    assert '"error": "ConfigError"' in result.output


def test_spatial_bias_without_reference_is_a_config_error(tmp_path):
    train = write_rows(
        tmp_path / "train.csv",
        [customer_row(f"c{i}", label=i % 2) for i in range(20)],
    )
    config = tmp_path / "run.toml"
    config.write_text(
        f'seed = 1\ntrain_csv = "{train.name}"\nbiases = ["class_imbalance", '
        '"spatial"]\n',
        encoding="utf-8",
    )
    result = invoke("weights", "-c", config)
    assert result.exit_code == 2
    assert '"exit_code": 2' in result.output
    assert "reference_csv" in result.output


def test_missing_report_is_a_config_error(tmp_path):
    result = invoke("report", "--seed", 1, "-o", tmp_path)
    assert result.exit_code == 2


def test_invalid_training_file_is_a_data_error(tmp_path):
    train = tmp_path / "train.csv"
    train.write_text("", encoding="utf-8")
    config = tmp_path / "run.toml"
    config.write_text('train_csv = "train.csv"\n', encoding="utf-8")
    result = invoke("features", "--seed", 1, "-o", tmp_path, "-c", config)
    assert result.exit_code == 3
    assert '"error": "DataError"' in result.output


def test_data_validate_prints_a_report(tmp_path):
    rows = [customer_row(f"c{i}", label=i % 2, region="AB"[i % 2]) for i in range(4)]
    path = write_rows(tmp_path / "customers.csv", rows)
    result = invoke("data", "validate", path)
    assert result.exit_code == 0, result.output
    # log lines may precede the JSON on the captured output
    report = json.loads(result.output[result.output.index("{\n"):])
    assert report["n_examples"] == 4
    assert report["region_counts"] == {"A": 2, "B": 2}
    assert report["degenerate"] is False


@pytest.mark.parametrize("flag", [[], ["--unlabeled"]])
def test_data_validate_schema_errors(tmp_path, flag):
    path = tmp_path / "bad.csv"
    path.write_text("customer_id,m01\nc0,1.0\n", encoding="utf-8")
    result = invoke("data", "validate", path, *flag)
    assert result.exit_code == 3
    assert '"error": "SchemaError"' in result.output


def test_data_validate_reject_limit(tmp_path):
    from scripts.ntl.ingest import DEFAULT_MAX_REJECT_FRACTION

    rows = [customer_row(f"c{i}", label=i % 2) for i in range(8)]
    rows.append(customer_row("bad", readings=[-1.0] * 24))
    path = write_rows(tmp_path / "customers.csv", rows)

    result = invoke("data", "validate", path)
    assert result.exit_code == 3
    assert f"limit is {DEFAULT_MAX_REJECT_FRACTION:.1%}" in result.output

    result = invoke("data", "validate", path, "--max-reject-fraction", 0.2)
    assert result.exit_code == 0, result.output
