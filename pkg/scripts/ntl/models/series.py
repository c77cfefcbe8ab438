"""Monthly consumption series and the CSV ingestion schema."""

from __future__ import annotations

import re

import numpy as np
from pydantic import Field, field_validator, model_validator

from scripts.ntl.models.base import (
    DEFAULT_PERIOD_DAYS,
    N_MONTHS,
    BinaryLabel,
    Category,
    NtlConfig,
    NtlRecord,
    PeriodDays,
    Reading,
)


def _month_columns(prefix: str) -> list[str]:
    return [f"{prefix}{m:02d}" for m in range(1, N_MONTHS + 1)]


class MonthlyTimeSeries(NtlRecord):
    """24 monthly meter readings (kWh) of one customer, oldest first."""

    customer_id: str = Field(min_length=1)
    readings: tuple[Reading, ...] = Field(min_length=N_MONTHS, max_length=N_MONTHS)
    period_days: tuple[PeriodDays, ...] = Field(
        default=(DEFAULT_PERIOD_DAYS,) * N_MONTHS,
        min_length=N_MONTHS,
        max_length=N_MONTHS,
    )

    def values(self) -> np.ndarray:
        """Readings as a float64 vector."""
        return np.asarray(self.readings, dtype=np.float64)

    def days(self) -> np.ndarray:
        """Billing-period lengths as a float64 vector."""
        return np.asarray(self.period_days, dtype=np.float64)

    def daily_averages(self) -> np.ndarray:
        """kWh/day for every month."""
        return self.values() / self.days()


class CustomerRow(MonthlyTimeSeries):
    """One accepted CSV row: the series plus label and categorical attributes."""

    label: BinaryLabel | None = None
    region: Category
    customer_class: Category
    attributes: dict[str, Category] = Field(default_factory=dict)

    @property
    def series(self) -> MonthlyTimeSeries:
        return MonthlyTimeSeries(
            customer_id=self.customer_id,
            readings=self.readings,
            period_days=self.period_days,
        )


class IngestSchema(NtlConfig):
    """Column names of a customer CSV file.

    ``days_columns`` are used only when present in the file header (billing
    periods default to 30 days otherwise). ``label_column = None`` reads an
    unlabeled reference population.
    """

    id_column: str = "customer_id"
    reading_prefix: str = "m"
    reading_columns: list[str] = Field(default_factory=lambda: _month_columns("m"))
    days_columns: list[str] | None = Field(
        default_factory=lambda: _month_columns("days")
    )
    label_column: str | None = "label"
    region_column: str = "region"
    class_column: str = "customer_class"
    extra_columns: list[str] = Field(default_factory=list)

    @field_validator("reading_columns")
    @classmethod
    def _check_reading_count(cls, value: list[str]) -> list[str]:
        if len(value) != N_MONTHS:
            msg = f"expected {N_MONTHS} reading columns, got {len(value)}"
            raise ValueError(msg)
        return value

    @field_validator("days_columns")
    @classmethod
    def _check_days_count(cls, value: list[str] | None) -> list[str] | None:
        if value is not None and len(value) != N_MONTHS:
            msg = f"expected {N_MONTHS} days columns, got {len(value)}"
            raise ValueError(msg)
        return value

    @model_validator(mode="after")
    def _check_unique(self) -> IngestSchema:
        names = self.required_columns() + list(self.days_columns or [])
        if len(names) != len(set(names)):
            raise ValueError("schema column names must be unique")
        return self

    def required_columns(self) -> list[str]:
        """Columns that must be present in every file read with this schema."""
        cols = [self.id_column, *self.reading_columns]
        if self.label_column is not None:
            cols.append(self.label_column)
        cols += [self.region_column, self.class_column, *self.extra_columns]
        return cols

    def undeclared_reading_columns(self, header: list[str]) -> list[str]:
        """Header columns that look like readings but are not in the schema."""
        pattern = re.compile(rf"^{re.escape(self.reading_prefix)}\d+$")
        declared = set(self.reading_columns)
        return [h for h in header if pattern.match(h) and h not in declared]

    def unlabeled(self) -> IngestSchema:
        """The same schema without a label column (reference populations)."""
        return self.model_copy(update={"label_column": None})
