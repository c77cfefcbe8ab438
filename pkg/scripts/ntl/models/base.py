"""Shared annotated types, enums, base classes and CSV writing for the NTL models."""

from __future__ import annotations

import csv
import io
import math
import sys
from enum import StrEnum
from pathlib import Path
from typing import Annotated, Any, TextIO

from pydantic import BaseModel, BeforeValidator, ConfigDict, PlainSerializer

N_MONTHS = 24
DEFAULT_PERIOD_DAYS = 30
MAX_PERIOD_DAYS = 62

# ---------------------------------------------------------------------------
# Reading / billing-period / label / category custom types
# ---------------------------------------------------------------------------


def _parse_reading(value: str | float | int) -> float:
    if isinstance(value, str):
        value = value.strip()
        try:
            value = float(value)
        except ValueError:
            raise ValueError("non-numeric reading") from None
    value = float(value)
    if not math.isfinite(value):
        raise ValueError("non-finite reading")
    if value < 0:
        raise ValueError("negative reading")
    return value


def _serialize_float(value: float) -> str:
    # repr() is the shortest string that round-trips a float exactly
    return repr(float(value))


Reading = Annotated[
    float,
    BeforeValidator(_parse_reading),
    PlainSerializer(_serialize_float),
]


def _parse_period_days(value: str | int | float) -> int:
    if isinstance(value, str):
        value = value.strip()
        if not value:
            return DEFAULT_PERIOD_DAYS
        try:
            value = float(value)
        except ValueError:
            raise ValueError("non-numeric period_days") from None
    if float(value) != int(value):
        raise ValueError("non-integer period_days")
    days = int(value)
    if not 1 <= days <= MAX_PERIOD_DAYS:
        raise ValueError("period_days out of range")
    return days


PeriodDays = Annotated[int, BeforeValidator(_parse_period_days)]


def _parse_label(value: str | int) -> int:
    text = str(value).strip()
    if text not in {"0", "1"}:
        raise ValueError("invalid label")
    return int(text)


BinaryLabel = Annotated[int, BeforeValidator(_parse_label)]


def _intern_category(value: Any) -> str:
    text = str(value).strip()
    if not text:
        raise ValueError("empty categorical code")
    return sys.intern(text)


Category = Annotated[str, BeforeValidator(_intern_category)]

# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------


class FeatureFamily(StrEnum):
    """Feature families, in extraction order."""

    DAILY_AVERAGE = "daily_average"
    FIXED_INTERVAL = "fixed_interval"
    GENERIC = "generic"
    INTRA_YEAR_DIFF = "intra_year_diff"
    INTRA_YEAR_SEASONAL_DIFF = "intra_year_seasonal_diff"


class BiasKind(StrEnum):
    """Bias columns understood by the weight builder.

    ``attribute:<column>`` and ``feature:<name>`` biases are parametrised and
    therefore not enumerated here.
    """

    CLASS_IMBALANCE = "class_imbalance"
    SPATIAL = "spatial"
    CUSTOMER_CLASS = "customer_class"


# ---------------------------------------------------------------------------
# Base model classes
# ---------------------------------------------------------------------------


class NtlRecord(BaseModel):
    """Base for immutable records (time series, reports)."""

    model_config = ConfigDict(
        frozen=True,
        str_strip_whitespace=True,
        use_enum_values=True,
    )


class NtlConfig(BaseModel):
    """Base for configuration models; unknown keys are rejected."""

    model_config = ConfigDict(
        frozen=True,
        extra="forbid",
        use_enum_values=True,
    )


# ---------------------------------------------------------------------------
# CSV writing
# ---------------------------------------------------------------------------


def _serialize_value(value: Any) -> str:
    """Convert a single cell to its CSV text; floats round-trip exactly."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _serialize_float(value)
    return str(value)


# Leading comment line of derived CSV exports
DIGEST_COMMENT_PREFIX = "# config_digest: "


def write_csv(
    headers: list[str],
    rows: list[list[Any]],
    output: Path | io.StringIO,
    *,
    delimiter: str = ",",
    encoding: str = "utf-8",
    config_digest: str | None = None,
) -> None:
    """Write a header row plus data rows as a UTF-8 CSV file.

    With ``config_digest`` the file starts with a ``# config_digest: <hex>``
    comment line ahead of the header.
    """
    text_rows = [[_serialize_value(v) for v in row] for row in rows]

    def emit(f: TextIO) -> None:
        if config_digest is not None:
            f.write(f"{DIGEST_COMMENT_PREFIX}{config_digest}\n")
        writer = csv.writer(f, delimiter=delimiter, lineterminator="\n")
        writer.writerow(headers)
        writer.writerows(text_rows)

    if isinstance(output, Path):
        output.parent.mkdir(parents=True, exist_ok=True)
        with open(output, "w", newline="", encoding=encoding) as f:
            emit(f)
    else:
        emit(output)


def read_config_digest(path: Path) -> str | None:
    """Config digest from the comment line of a CSV export, if present."""
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
    if first.startswith(DIGEST_COMMENT_PREFIX):
        return first.removeprefix(DIGEST_COMMENT_PREFIX)
    return None
