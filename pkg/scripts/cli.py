"""NTL bias reduction CLI (Typer application)."""

from __future__ import annotations

import json
import logging
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import TYPE_CHECKING, Annotated

import typer

if TYPE_CHECKING:
    from scripts.ntl.config import RunConfig

logger = logging.getLogger(__name__)

app = typer.Typer(
    help="Multi-bias reduction for non-technical loss detection.",
    no_args_is_help=True,
)
data_app = typer.Typer(help="Inspect customer CSV files.", no_args_is_help=True)

app.add_typer(data_app, name="data")

INTERNAL_ERROR_EXIT = 4

ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="Run configuration (TOML)."),
]
SeedOption = Annotated[
    int | None, typer.Option("--seed", help="Random seed (overrides the config).")
]
ThreadsOption = Annotated[
    int | None,
    typer.Option("--threads", help="Worker processes, 0 = all cores."),
]
OutOption = Annotated[
    Path | None, typer.Option("--out", "-o", help="Output directory.")
]
VerboseOption = Annotated[
    bool, typer.Option("--verbose", "-v", help="Log debug messages.")
]


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------


def _setup_logging(verbose: bool) -> None:
    from rich.logging import RichHandler

    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
    )
    logging.getLogger().setLevel(level)


def _fail(error: str, message: str, exit_code: int) -> None:
    payload = {"error": error, "message": message, "exit_code": exit_code}
    typer.echo(json.dumps(payload, ensure_ascii=False), err=True)
    raise typer.Exit(exit_code)


@contextmanager
def _errors_as_json() -> Iterator[None]:
    """Turn any failure into an error object on stderr and an exit code."""
    from scripts.ntl.errors import NtlBiasError

    try:
        yield
    except typer.Exit:
        raise
    except NtlBiasError as exc:
        _fail(type(exc).__name__, str(exc), exc.exit_code)
    except Exception as exc:
        logger.debug("Internal error", exc_info=True)
        _fail("InternalError", str(exc) or type(exc).__name__, INTERNAL_ERROR_EXIT)


def _load_config(
    config: Path | None, seed: int | None, threads: int | None, out: Path | None
) -> RunConfig:
    from scripts.ntl.config import load_config

    return load_config(config, {"seed": seed, "threads": threads, "out_dir": out})


def _echo_artifacts(artifacts: dict[str, Path]) -> None:
    for name in sorted(artifacts):
        typer.echo(f"{name}: {artifacts[name]}")


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------


@app.command()
def synth(
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Generate a synthetic population and a biased training sample."""
    _setup_logging(verbose)
    with _errors_as_json():
        from scripts.ntl.pipeline import run_synth

        _echo_artifacts(run_synth(_load_config(config, seed, threads, out)))


@app.command()
def features(
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Extract the feature families and run the univariate selection."""
    _setup_logging(verbose)
    with _errors_as_json():
        from scripts.ntl.pipeline import run_features

        _echo_artifacts(run_features(_load_config(config, seed, threads, out)))


@app.command()
def weights(
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Build the per-bias and combined training weights."""
    _setup_logging(verbose)
    with _errors_as_json():
        from scripts.ntl.pipeline import run_weights

        _echo_artifacts(run_weights(_load_config(config, seed, threads, out)))


@app.command()
def train(
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Random forest search with the configured weights, then a final fit."""
    _setup_logging(verbose)
    with _errors_as_json():
        from scripts.ntl.pipeline import run_train

        _echo_artifacts(run_train(_load_config(config, seed, threads, out)))


@app.command()
def ladder(
    config: ConfigOption = None,
    seed: SeedOption = None,
    threads: ThreadsOption = None,
    out: OutOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Evaluate every bias set of the ladder on the same folds."""
    _setup_logging(verbose)
    with _errors_as_json():
        from rich.console import Console

        from scripts.ntl.evaluation import render_report
        from scripts.ntl.pipeline import run_ladder

        report, artifacts = run_ladder(_load_config(config, seed, threads, out))
        Console().print(render_report(report))
        _echo_artifacts(artifacts)


@app.command()
def report(
    report_json: Path | None = typer.Argument(
        None, help="Report to render (default: <out>/report.json)."
    ),
    config: ConfigOption = None,
    seed: SeedOption = None,
    out: OutOption = None,
    verbose: VerboseOption = False,
) -> None:
    """Render a ladder report as a table."""
    _setup_logging(verbose)
    with _errors_as_json():
        from rich.console import Console

        from scripts.ntl.evaluation import render_report
        from scripts.ntl.pipeline import load_report, run_report

        if report_json is not None and seed is None and config is None:
            seed = load_report(report_json).seed
        cfg = _load_config(config, seed, None, out)
        path = report_json or cfg.out_dir / "report.json"
        Console().print(render_report(load_report(path)))
        _echo_artifacts(run_report(cfg, path))


# ---------------------------------------------------------------------------
# Data
# ---------------------------------------------------------------------------


@data_app.command("validate")
def data_validate(
    csv_file: Path = typer.Argument(help="Customer CSV file."),
    unlabeled: bool = typer.Option(
        False, "--unlabeled", help="The file has no label column."
    ),
    extra_attribute: list[str] = typer.Option(
        [], "--extra-attribute", "-a", help="Extra categorical column."
    ),
    max_reject_fraction: float | None = typer.Option(
        None,
        "--max-reject-fraction",
        min=0.0,
        max=1.0,
        help="Largest tolerated share of bad rows (default: the ingest limit).",
    ),
    verbose: VerboseOption = False,
) -> None:
    """Print class, region and reading statistics of a CSV file as JSON."""
    _setup_logging(verbose)
    with _errors_as_json():
        from scripts.ntl.ingest import (
            DEFAULT_MAX_REJECT_FRACTION,
            load_dataset,
            validate_dataset,
        )
        from scripts.ntl.models import IngestSchema

        schema = IngestSchema(extra_columns=extra_attribute)
        if unlabeled:
            schema = schema.unlabeled()
        if max_reject_fraction is None:
            max_reject_fraction = DEFAULT_MAX_REJECT_FRACTION
        result = load_dataset(
            csv_file, schema, max_reject_fraction=max_reject_fraction
        )
        typer.echo(validate_dataset(result.dataset).model_dump_json(indent=2))
