"""NTL data models: series, datasets, weights and reports."""

from scripts.ntl.models.base import (
    DEFAULT_PERIOD_DAYS,
    MAX_PERIOD_DAYS,
    N_MONTHS,
    BiasKind,
    BinaryLabel,
    Category,
    FeatureFamily,
    NtlConfig,
    NtlRecord,
    PeriodDays,
    Reading,
    read_config_digest,
    write_csv,
)
from scripts.ntl.models.dataset import LabeledDataset, WeightSet
from scripts.ntl.models.reports import (
    EvaluationReport,
    LadderStepResult,
    RejectedRow,
    ValidationReport,
)
from scripts.ntl.models.series import CustomerRow, IngestSchema, MonthlyTimeSeries

__all__ = [
    # Base
    "NtlConfig",
    "NtlRecord",
    "BinaryLabel",
    "Category",
    "PeriodDays",
    "Reading",
    "read_config_digest",
    "write_csv",
    "DEFAULT_PERIOD_DAYS",
    "MAX_PERIOD_DAYS",
    "N_MONTHS",
    # Enums
    "BiasKind",
    "FeatureFamily",
    # Series and ingestion
    "CustomerRow",
    "IngestSchema",
    "MonthlyTimeSeries",
    # Containers
    "LabeledDataset",
    "WeightSet",
    # Reports
    "EvaluationReport",
    "LadderStepResult",
    "RejectedRow",
    "ValidationReport",
]
