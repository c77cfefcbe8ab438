"""Exception hierarchy shared by the pipeline and the CLI.

Each error class carries the process exit code the CLI reports for it.
"""

from __future__ import annotations


class NtlBiasError(Exception):
    """Base class for all expected pipeline failures."""

    exit_code: int = 4


class ConfigError(NtlBiasError):
    """Raised for invalid or incomplete configuration."""

    exit_code = 2


class DataError(NtlBiasError):
    """Raised when input data cannot be used (empty, degenerate, too noisy)."""

    exit_code = 3


class SchemaError(DataError):
    """Raised when a CSV header does not match the ingestion schema."""
