"""Subcommand orchestration: load, featurize, weight, search, report.

Every command writes its artifacts to ``out_dir`` plus a manifest
``manifest-<command>.json`` with the config digest, the seed, package
versions and the SHA-256 of each artifact. JSON artifacts also embed the
config digest themselves.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import platform
from collections.abc import Iterable
from importlib.metadata import PackageNotFoundError, version
from io import StringIO
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from rich.console import Console

from scripts.ntl.config import RunConfig
from scripts.ntl.errors import ConfigError, DataError
from scripts.ntl.evaluation import render_report, run_bias_ladder
from scripts.ntl.features import (
    featurize,
    select_dataset_features,
    selection_summary,
    write_feature_matrix,
    write_selection_report,
)
from scripts.ntl.ingest import load_dataset, write_rejects
from scripts.ntl.models import (
    EvaluationReport,
    LabeledDataset,
    RejectedRow,
    write_csv,
)
from scripts.ntl.synthgen import (
    generate_population,
    oracle_weights,
    sample_biased_training,
    synth_config,
    write_synthetic,
)
from scripts.ntl.weights import (
    WeightBuilder,
    parse_bias,
    weights_summary,
    write_weights,
)
from tools.forest import fit_forest, random_search
from tools.stats_tests import SelectionResult

logger = logging.getLogger(__name__)

VERSIONED_PACKAGES = ("ntl-bias", "numpy", "scipy", "scikit-learn", "pydantic")

# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------


def write_json(payload: Any, path: Path) -> None:
    """Canonical JSON (sorted keys, two-space indent, trailing newline)."""
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def package_versions() -> dict[str, str]:
    versions = {"python": platform.python_version()}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = version(name)
        except PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(command: str, cfg: RunConfig, artifacts: dict[str, Path]) -> Path:
    """Record config digest, seed, versions and artifact hashes of a command."""
    path = cfg.out_dir / f"manifest-{command}.json"
    write_json(
        {
            "command": command,
            "config_digest": cfg.digest(),
            "seed": cfg.seed,
            "versions": package_versions(),
            "artifacts": {
                name: {"path": p.name, "sha256": file_digest(p)}
                for name, p in sorted(artifacts.items())
            },
        },
        path,
    )
    logger.info("Wrote %d artifacts and %s", len(artifacts), path)
    return path


# ---------------------------------------------------------------------------
# Inputs
# ---------------------------------------------------------------------------


class Prepared(NamedTuple):
    """Training and reference data, before and after feature selection."""

    train_full: LabeledDataset
    train: LabeledDataset
    reference_full: LabeledDataset | None
    reference: LabeledDataset | None


def _existing(path: Path | None, key: str) -> Path:
    if path is None:
        msg = f"{key} is not configured"
        raise ConfigError(msg)
    if not path.is_file():
        msg = f"{key} {path} does not exist"
        raise ConfigError(msg)
    return path


def needs_reference(biases: Iterable[str]) -> bool:
    return any(parse_bias(b).kind != "class" for b in biases)


def _has_label_column(path: Path, label_column: str) -> bool:
    with open(path, encoding="utf-8-sig", newline="") as f:
        header = next(csv.reader(f), [])
    return label_column in [h.strip() for h in header]


def _load(
    path: Path, cfg: RunConfig, *, labeled: bool
) -> tuple[LabeledDataset, list[RejectedRow]]:
    result = load_dataset(
        path,
        cfg.schema(labeled=labeled),
        max_reject_fraction=cfg.max_reject_fraction,
    )
    dataset = featurize(
        result.dataset, result.series, cfg.feature_config(), n_jobs=cfg.n_jobs
    )
    return dataset, result.rejects


def prepare(
    cfg: RunConfig, biases: Iterable[str] = (), artifacts: dict[str, Path] | None = None
) -> tuple[Prepared, SelectionResult]:
    """Load and featurize the inputs and select features on the training set."""
    biases = list(biases)
    train_path = _existing(cfg.train_csv, "train_csv")
    reference_path = None
    if cfg.reference_csv is not None or needs_reference(biases):
        reference_path = _existing(cfg.reference_csv, "reference_csv")

    train_full, rejects = _load(train_path, cfg, labeled=True)
    if artifacts is not None:
        artifacts["rejects"] = cfg.out_dir / "rejects.csv"
        write_rejects(rejects, artifacts["rejects"], config_digest=cfg.digest())

    reference_full = None
    if reference_path is not None:
        labeled = _has_label_column(reference_path, cfg.schema().label_column or "")
        reference_full, _ = _load(reference_path, cfg, labeled=labeled)

    train, selection = select_dataset_features(train_full, cfg.alpha)
    if train.n_features == 0:
        raise DataError("no feature passed the selection; raise alpha")
    reference = None
    if reference_full is not None:
        reference = reference_full.select_features(selection.retained_mask)
    return Prepared(train_full, train, reference_full, reference), selection


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def run_synth(cfg: RunConfig) -> dict[str, Path]:
    """Generate a synthetic population and its biased training sample."""
    overrides: dict[str, Any] = {"seed": cfg.seed}
    if cfg.synth_population is not None:
        overrides["population"] = cfg.synth_population
    synth = synth_config(cfg.synth_preset, **overrides)
    population = generate_population(synth)
    training = sample_biased_training(population, synth)
    artifacts = write_synthetic(population, training, cfg.out_dir)

    weights = oracle_weights(training.truth, training.dataset.customer_ids)
    artifacts["oracle_weights"] = cfg.out_dir / "oracle_weights.csv"
    write_csv(
        ["customer_id", "w_oracle"],
        [
            [cid, w]
            for cid, w in zip(
                training.dataset.customer_ids, weights.tolist(), strict=True
            )
        ],
        artifacts["oracle_weights"],
        config_digest=cfg.digest(),
    )
    artifacts["synth_config"] = cfg.out_dir / "synth_config.json"
    write_json(
        {
            "config_digest": cfg.digest(),
            "preset": cfg.synth_preset,
            "synth": synth.model_dump(mode="json"),
            "population_priors": training.truth.priors(),
            "training_priors": training.truth.training_priors(),
        },
        artifacts["synth_config"],
    )
    write_manifest("synth", cfg, artifacts)
    return artifacts


def run_features(cfg: RunConfig) -> dict[str, Path]:
    """Extract features, select them and write matrix plus selection report."""
    artifacts: dict[str, Path] = {}
    prepared, selection = prepare(cfg, artifacts=artifacts)
    names = list(prepared.train_full.feature_names)

    artifacts["features"] = cfg.out_dir / "features.csv"
    write_feature_matrix(
        prepared.train, artifacts["features"], config_digest=cfg.digest()
    )
    artifacts["selection"] = cfg.out_dir / "selection.csv"
    write_selection_report(
        names, selection, artifacts["selection"], config_digest=cfg.digest()
    )
    artifacts["selection_summary"] = cfg.out_dir / "selection_summary.json"
    write_json(
        {
            "config_digest": cfg.digest(),
            "alpha": cfg.alpha,
            "n_features": len(names),
            "n_retained": selection.n_retained,
            "families": selection_summary(names, selection),
        },
        artifacts["selection_summary"],
    )
    write_manifest("features", cfg, artifacts)
    return artifacts


def _weight_builder(cfg: RunConfig, prepared: Prepared) -> WeightBuilder:
    # feature shifts may name features the selection dropped
    return WeightBuilder(
        prepared.train_full,
        prepared.reference_full,
        cfg.weight_options(),
        cfg.n_jobs,
    )


def run_weights(cfg: RunConfig) -> dict[str, Path]:
    """Build the combined weight set of ``biases`` and ``feature_shifts``."""
    biases = cfg.bias_list()
    artifacts: dict[str, Path] = {}
    prepared, _ = prepare(cfg, biases, artifacts)
    builder = _weight_builder(cfg, prepared)
    weight_set = builder.build(biases)

    artifacts["weights"] = cfg.out_dir / "weights.csv"
    write_weights(weight_set, artifacts["weights"], config_digest=cfg.digest())
    artifacts["weights_summary"] = cfg.out_dir / "weights.json"
    write_json(
        {
            "config_digest": cfg.digest(),
            **weights_summary(weight_set),
            "models": builder.models,
        },
        artifacts["weights_summary"],
    )
    write_manifest("weights", cfg, artifacts)
    return artifacts


def run_train(cfg: RunConfig) -> dict[str, Path]:
    """Random search with the configured weights, then a final fit on all data."""
    biases = cfg.bias_list()
    search = cfg.search_options()
    artifacts: dict[str, Path] = {}
    prepared, _ = prepare(cfg, biases, artifacts)
    train = prepared.train
    labels = train.require_labels()
    weights = np.ones(train.n_examples)
    if biases:
        weights = _weight_builder(cfg, prepared).build(biases).normalized

    try:
        result = random_search(
            train.features,
            labels,
            weights,
            n_models=search.n_models,
            folds=search.folds,
            seed=cfg.seed,
            n_estimators=search.n_estimators,
            weighted_bootstrap=search.weighted_bootstrap,
            n_jobs=cfg.n_jobs,
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    model = fit_forest(
        train.features,
        labels,
        weights,
        result.best_params,
        cfg.seed,
        weighted_bootstrap=search.weighted_bootstrap,
        n_jobs=cfg.n_jobs,
    )

    artifacts["search"] = cfg.out_dir / "search.csv"
    param_keys = list(result.best_params.model_dump())
    write_csv(
        ["model_id", *param_keys, "fold", "auc"],
        [
            [
                s.model_id,
                *result.candidates[s.model_id].model_dump(mode="json").values(),
                s.fold,
                s.auc,
            ]
            for s in result.scores
        ],
        artifacts["search"],
        config_digest=cfg.digest(),
    )
    artifacts["model"] = cfg.out_dir / "model.json"
    write_json(
        {
            "config_digest": cfg.digest(),
            "model_digest": model.digest(),
            "feature_names": list(train.feature_names),
            "biases": biases,
            "cv_mean_auc": result.mean_auc(),
            "cv_fold_aucs": list(result.fold_aucs),
            "model": model.to_json(),
        },
        artifacts["model"],
    )
    if prepared.reference is not None:
        scores = model.predict_proba(prepared.reference.features)
        artifacts["scores"] = cfg.out_dir / "scores.csv"
        write_csv(
            ["customer_id", "score"],
            [
                [cid, s]
                for cid, s in zip(
                    prepared.reference.customer_ids, scores.tolist(), strict=True
                )
            ],
            artifacts["scores"],
            config_digest=cfg.digest(),
        )
    write_manifest("train", cfg, artifacts)
    return artifacts


def run_ladder(cfg: RunConfig) -> tuple[EvaluationReport, dict[str, Path]]:
    """The bias-ladder experiment; writes ``report.json``."""
    steps = cfg.ladder_steps()
    artifacts: dict[str, Path] = {}
    prepared, _ = prepare(cfg, [b for step in steps for b in step], artifacts)
    report = run_bias_ladder(
        prepared.train,
        prepared.reference,
        steps,
        cfg.seed,
        weight_options=cfg.weight_options(),
        search=cfg.search_options(),
        config_digest=cfg.digest(),
        n_jobs=cfg.n_jobs,
    )
    artifacts["report"] = cfg.out_dir / "report.json"
    write_json(report.model_dump(mode="json"), artifacts["report"])
    write_manifest("ladder", cfg, artifacts)
    return report, artifacts


def load_report(path: Path) -> EvaluationReport:
    if not path.is_file():
        msg = f"report {path} does not exist"
        raise ConfigError(msg)
    try:
        return EvaluationReport.model_validate_json(path.read_text(encoding="utf-8"))
    except ValueError as exc:
        msg = f"{path} is not a valid report: {exc}"
        raise DataError(msg) from exc


def run_report(cfg: RunConfig, report_path: Path | None = None) -> dict[str, Path]:
    """Render ``report.json`` as a table into ``report.txt``."""
    report = load_report(report_path or cfg.out_dir / "report.json")
    console = Console(file=StringIO(), width=100, color_system=None)
    console.print(render_report(report))
    if report.config_digest is not None:
        console.print(f"config_digest: {report.config_digest}")
    artifacts = {"report_table": cfg.out_dir / "report.txt"}
    artifacts["report_table"].parent.mkdir(parents=True, exist_ok=True)
    artifacts["report_table"].write_text(console.file.getvalue(), encoding="utf-8")
    write_manifest("report", cfg, artifacts)
    return artifacts
