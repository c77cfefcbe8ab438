"""Bias-ladder experiment: one randomized forest search per bias set.

Each ladder step trains with the combined weights of its bias set (uniform
weights for the empty set) and records the cross-validated AUC of the best
parameter set. Folds depend only on the seed and the labels, so every step
is evaluated on the same folds and the steps can be compared pairwise.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence

import numpy as np
from pydantic import Field
from rich.table import Table

from scripts.ntl.errors import ConfigError, DataError
from scripts.ntl.models import (
    EvaluationReport,
    LabeledDataset,
    LadderStepResult,
    NtlConfig,
)
from scripts.ntl.weights import WeightBuilder, WeightOptions, parse_bias
from tools.forest import random_search, stratified_folds

logger = logging.getLogger(__name__)

NO_BIAS = "none"


class SearchOptions(NtlConfig):
    """Random-search protocol of every ladder step."""

    n_models: int = Field(default=100, ge=1)
    folds: int = Field(default=10, ge=2)
    n_estimators: int = Field(default=20, ge=1)
    weighted_bootstrap: bool = True
    # weighted AUC on the validation folds, weights from the fullest bias set
    estimated_unbiased_auc: bool = False


def parse_ladder(steps: Sequence[str | Sequence[str]]) -> list[tuple[str, ...]]:
    """Bias sets from ``"a+b"`` strings (or sequences); ``"none"`` is empty."""
    if not steps:
        raise ConfigError("the ladder is empty")
    ladder: list[tuple[str, ...]] = []
    for step in steps:
        names = step.split("+") if isinstance(step, str) else list(step)
        names = [n.strip() for n in names if n.strip()]
        if names == [NO_BIAS]:
            names = []
        for name in names:
            parse_bias(name)
        ladder.append(tuple(names))
    return ladder


def step_label(biases: Sequence[str]) -> str:
    return " + ".join(biases) if biases else NO_BIAS


def run_bias_ladder(
    dataset: LabeledDataset,
    reference: LabeledDataset | None,
    ladder: Sequence[str | Sequence[str]],
    seed: int,
    *,
    weight_options: WeightOptions | None = None,
    search: SearchOptions | None = None,
    config_digest: str | None = None,
    n_jobs: int = 1,
) -> EvaluationReport:
    """Evaluate every bias set of ``ladder`` on the same stratified folds."""
    search = search or SearchOptions()
    steps = parse_ladder(ladder)
    labels = dataset.require_labels()
    try:
        stratified_folds(labels, search.folds, seed)
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    options = weight_options or WeightOptions()
    builder = WeightBuilder(dataset, reference, options, n_jobs)
    eval_weights = None
    if search.estimated_unbiased_auc:
        union = list(dict.fromkeys(b for step in steps for b in step))
        if union:
            eval_weights = builder.build(union).normalized
        else:
            logger.warning("Estimated unbiased AUC needs at least one bias; skipped")

    configurations: list[LadderStepResult] = []
    for step in steps:
        if step:
            weight_set = builder.build(step)
            weights = weight_set.normalized
            ess = weight_set.effective_sample_size(weights)
        else:
            weights = np.ones(dataset.n_examples)
            ess = float(dataset.n_examples)

        result = random_search(
            dataset.features,
            labels,
            weights,
            n_models=search.n_models,
            folds=search.folds,
            seed=seed,
            n_estimators=search.n_estimators,
            weighted_bootstrap=search.weighted_bootstrap,
            eval_weights=eval_weights,
            n_jobs=n_jobs,
        )
        weighted = result.weighted_fold_aucs
        estimated = None if weighted is None else list(weighted)
        configurations.append(
            LadderStepResult(
                biases=list(step),
                fold_aucs=list(result.fold_aucs),
                mean_auc=result.mean_auc(),
                best_params=result.best_params.model_dump(mode="json"),
                effective_sample_size=ess,
                estimated_unbiased_fold_aucs=estimated,
                estimated_unbiased_mean_auc=(
                    None if estimated is None else math.fsum(estimated) / len(estimated)
                ),
            )
        )
        logger.info(
            "Ladder step %s: mean AUC %.5f", step_label(step), result.mean_auc()
        )

    return EvaluationReport(
        configurations=configurations,
        seed=seed,
        dataset_digest=dataset.digest(),
        config_digest=config_digest,
    )


def render_report(report: EvaluationReport) -> Table:
    """Table with one row per ladder step, in ladder order."""
    table = Table(title=f"Bias ladder (seed {report.seed})")
    table.add_column("Biases")
    table.add_column("Mean AUC", justify="right")
    table.add_column("Fold AUC range", justify="right")
    table.add_column("ESS", justify="right")
    estimated = any(
        c.estimated_unbiased_mean_auc is not None for c in report.configurations
    )
    if estimated:
        table.add_column("Estimated unbiased AUC", justify="right")

    for step in report.configurations:
        ess = step.effective_sample_size
        row = [
            step.label,
            f"{step.mean_auc:.5f}",
            f"{min(step.fold_aucs):.3f} - {max(step.fold_aucs):.3f}",
            "-" if ess is None else f"{ess:.1f}",
        ]
        if estimated:
            value = step.estimated_unbiased_mean_auc
            row.append("" if value is None else f"{value:.5f}")
        table.add_row(*row)
    return table
