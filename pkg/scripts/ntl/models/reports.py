"""Pydantic report models written as JSON/CSV artifacts."""

from __future__ import annotations

import math
from typing import Any

from pydantic import Field, model_validator

from scripts.ntl.models.base import NtlRecord


class RejectedRow(NtlRecord):
    """One input row that failed validation."""

    row_number: int
    reason: str


class ValidationReport(NtlRecord):
    """Counts and ranges of a dataset (report-only, never raises)."""

    n_examples: int
    class_counts: dict[int, int]
    region_counts: dict[str, int]
    customer_class_counts: dict[str, int]
    nan_counts: dict[str, int]
    feature_min: dict[str, float]
    feature_max: dict[str, float]
    degenerate: bool


class LadderStepResult(NtlRecord):
    """Cross-validated AUC of the best model for one bias set."""

    biases: list[str]
    fold_aucs: list[float]
    mean_auc: float
    best_params: dict[str, Any] = Field(default_factory=dict)
    effective_sample_size: float | None = None
    estimated_unbiased_fold_aucs: list[float] | None = None
    estimated_unbiased_mean_auc: float | None = None

    @model_validator(mode="after")
    def _check_aucs(self) -> LadderStepResult:
        if not self.fold_aucs:
            raise ValueError("at least one fold AUC is required")
        if any(not 0.0 <= a <= 1.0 for a in self.fold_aucs):
            raise ValueError("fold AUCs must lie in [0, 1]")
        mean = math.fsum(self.fold_aucs) / len(self.fold_aucs)
        if abs(mean - self.mean_auc) > 1e-12:
            raise ValueError("mean_auc must equal the mean of fold_aucs")
        return self

    @property
    def label(self) -> str:
        return " + ".join(self.biases) if self.biases else "none"


class EvaluationReport(NtlRecord):
    """Bias-ladder experiment outcome, one entry per ladder step."""

    configurations: list[LadderStepResult]
    seed: int
    dataset_digest: str
    config_digest: str | None = None
