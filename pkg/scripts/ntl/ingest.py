"""Customer CSV ingestion, validation and canonical re-export.

A customer file holds one row per customer with 24 monthly readings, optional
billing-period lengths, the inspection label and categorical master data
(region, customer class, any configured extra columns). Rows that violate the
series invariants are collected as rejects instead of aborting the run; the
load fails only when the reject share exceeds the configured limit.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from pathlib import Path
from typing import NamedTuple

import numpy as np
from pydantic import ValidationError

from scripts.ntl.errors import DataError, SchemaError
from scripts.ntl.models import (
    CustomerRow,
    IngestSchema,
    LabeledDataset,
    MonthlyTimeSeries,
    RejectedRow,
    ValidationReport,
    write_csv,
)

logger = logging.getLogger(__name__)

DEFAULT_MAX_REJECT_FRACTION = 0.10


class IngestResult(NamedTuple):
    """Accepted rows as a dataset (features = raw readings) plus the rejects."""

    dataset: LabeledDataset
    series: list[MonthlyTimeSeries]
    rejects: list[RejectedRow]


# ---------------------------------------------------------------------------
# Reading
# ---------------------------------------------------------------------------


def _reject_reason(exc: ValidationError) -> str:
    """First validation message, without pydantic's ``Value error,`` prefix."""
    message = exc.errors()[0]["msg"]
    return message.removeprefix("Value error, ")


def _check_header(header: list[str], schema: IngestSchema) -> bool:
    """Validate the header; returns whether billing-period columns are present."""
    undeclared = schema.undeclared_reading_columns(header)
    if undeclared:
        msg = (
            f"header declares reading columns not in the schema: {undeclared} "
            f"(schema has {len(schema.reading_columns)})"
        )
        raise SchemaError(msg)
    missing = [c for c in schema.required_columns() if c not in header]
    if missing:
        msg = f"missing columns: {missing}"
        raise SchemaError(msg)
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")

    if schema.days_columns is None:
        return False
    present = [c for c in schema.days_columns if c in header]
    if present and len(present) != len(schema.days_columns):
        msg = f"incomplete billing-period columns: {len(present)} of 24 present"
        raise SchemaError(msg)
    return bool(present)


def _parse_row(
    cells: dict[str, str], schema: IngestSchema, has_days: bool
) -> CustomerRow:
    data: dict[str, object] = {
        "customer_id": cells[schema.id_column],
        "readings": tuple(cells[c] for c in schema.reading_columns),
        "region": cells[schema.region_column],
        "customer_class": cells[schema.class_column],
        "attributes": {c: cells[c] for c in schema.extra_columns},
    }
    if has_days:
        data["period_days"] = tuple(cells[c] for c in schema.days_columns or [])
    if schema.label_column is not None:
        data["label"] = cells[schema.label_column]
    return CustomerRow.model_validate(data)


def read_rows(
    path: Path, schema: IngestSchema
) -> tuple[list[CustomerRow], list[RejectedRow]]:
    """Parse every data row of ``path``; row numbers count data rows from 1."""
    with open(path, encoding="utf-8-sig", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            msg = f"{path} is empty"
            raise DataError(msg)
        header = [h.strip() for h in header]
        has_days = _check_header(header, schema)

        accepted: list[CustomerRow] = []
        rejects: list[RejectedRow] = []
        seen: set[str] = set()
        for row_number, cells in enumerate(reader, start=1):
            if not cells:
                continue
            if len(cells) != len(header):
                reason = f"expected {len(header)} fields, got {len(cells)}"
                rejects.append(RejectedRow(row_number=row_number, reason=reason))
                continue
            try:
                fields = dict(zip(header, cells, strict=True))
                row = _parse_row(fields, schema, has_days)
            except ValidationError as exc:
                reason = _reject_reason(exc)
                rejects.append(RejectedRow(row_number=row_number, reason=reason))
                continue
            if row.customer_id in seen:
                reason = "duplicate customer_id"
                rejects.append(RejectedRow(row_number=row_number, reason=reason))
                continue
            seen.add(row.customer_id)
            accepted.append(row)

    if not accepted and not rejects:
        msg = f"{path} has no data rows"
        raise DataError(msg)
    return accepted, rejects


def rows_to_dataset(rows: list[CustomerRow], schema: IngestSchema) -> LabeledDataset:
    """Dataset over the raw readings, one feature column per month."""
    features = np.array([r.readings for r in rows], dtype=np.float64).reshape(
        len(rows), len(schema.reading_columns)
    )
    labels = None
    if schema.label_column is not None:
        labels = np.array([r.label for r in rows], dtype=np.int8)
    return LabeledDataset(
        customer_ids=tuple(r.customer_id for r in rows),
        features=features,
        labels=labels,
        regions=tuple(r.region for r in rows),
        customer_classes=tuple(r.customer_class for r in rows),
        feature_names=tuple(schema.reading_columns),
        attributes={
            c: tuple(r.attributes[c] for r in rows) for c in schema.extra_columns
        },
    )


def load_dataset(
    path: Path,
    schema: IngestSchema | None = None,
    *,
    max_reject_fraction: float = DEFAULT_MAX_REJECT_FRACTION,
) -> IngestResult:
    """Load and validate a customer CSV file.

    Row order is preserved. Raises ``SchemaError`` for header problems and
    ``DataError`` for empty files or a reject share above
    ``max_reject_fraction``.
    """
    schema = schema or IngestSchema()
    if not path.is_file():
        msg = f"{path} does not exist"
        raise DataError(msg)
    rows, rejects = read_rows(path, schema)

    for reject in rejects:
        logger.warning("Row %d rejected: %s", reject.row_number, reject.reason)
    total = len(rows) + len(rejects)
    fraction = len(rejects) / total
    if fraction > max_reject_fraction:
        msg = (
            f"{len(rejects)} of {total} rows rejected ({fraction:.1%}), "
            f"limit is {max_reject_fraction:.1%}"
        )
        raise DataError(msg)
    logger.info(
        "Loaded %d customers from %s (%d rejected)", len(rows), path, len(rejects)
    )
    return IngestResult(
        dataset=rows_to_dataset(rows, schema),
        series=[r.series for r in rows],
        rejects=rejects,
    )


# ---------------------------------------------------------------------------
# Writing
# ---------------------------------------------------------------------------


def canonical_header(schema: IngestSchema) -> list[str]:
    header = [schema.id_column, *schema.reading_columns]
    header += list(schema.days_columns or [])
    if schema.label_column is not None:
        header.append(schema.label_column)
    header += [schema.region_column, schema.class_column, *schema.extra_columns]
    return header


def save_dataset(
    dataset: LabeledDataset,
    series: list[MonthlyTimeSeries],
    path: Path,
    schema: IngestSchema | None = None,
) -> None:
    """Write accepted rows back in the canonical column layout.

    Loading the written file with the same schema reproduces every field.
    """
    schema = schema or IngestSchema()
    if [s.customer_id for s in series] != list(dataset.customer_ids):
        raise ValueError("series and dataset must list the same customers in order")
    if schema.label_column is not None and dataset.labels is None:
        raise ValueError("schema has a label column but the dataset is unlabeled")

    rows: list[list[object]] = []
    for i, s in enumerate(series):
        row: list[object] = [s.customer_id, *s.readings]
        if schema.days_columns is not None:
            row += list(s.period_days)
        if schema.label_column is not None:
            row.append(int(dataset.labels[i]))  # type: ignore[index]
        row += [dataset.regions[i], dataset.customer_classes[i]]
        row += [dataset.attributes[c][i] for c in schema.extra_columns]
        rows.append(row)
    write_csv(canonical_header(schema), rows, path)


def write_rejects(
    rejects: list[RejectedRow], path: Path, *, config_digest: str | None = None
) -> None:
    write_csv(
        ["row_number", "reason"],
        [[r.row_number, r.reason] for r in rejects],
        path,
        config_digest=config_digest,
    )


# ---------------------------------------------------------------------------
# Validation report
# ---------------------------------------------------------------------------


def validate_dataset(ds: LabeledDataset) -> ValidationReport:
    """Class, region and customer-class counts plus per-feature ranges.

    Never raises. ``degenerate`` is set for an empty dataset and for a
    labeled dataset missing one of the classes.
    """
    n = ds.n_examples
    class_counts: dict[int, int] = {}
    if ds.labels is not None:
        counts = np.bincount(ds.labels.astype(np.intp), minlength=2)
        class_counts = {0: int(counts[0]), 1: int(counts[1])}

    finite = np.isfinite(ds.features)
    nan_counts = {
        name: int(n - finite[:, j].sum()) for j, name in enumerate(ds.feature_names)
    }
    feature_min: dict[str, float] = {}
    feature_max: dict[str, float] = {}
    if n:
        feature_min = dict(
            zip(ds.feature_names, ds.features.min(axis=0).tolist(), strict=True)
        )
        feature_max = dict(
            zip(ds.feature_names, ds.features.max(axis=0).tolist(), strict=True)
        )

    degenerate = n == 0 or (bool(class_counts) and min(class_counts.values()) == 0)
    return ValidationReport(
        n_examples=n,
        class_counts=class_counts,
        region_counts=dict(Counter(ds.regions)),
        customer_class_counts=dict(Counter(ds.customer_classes)),
        nan_counts=nan_counts,
        feature_min=feature_min,
        feature_max=feature_max,
        degenerate=degenerate,
    )
