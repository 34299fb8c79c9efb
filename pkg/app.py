import logging
import os
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Iterator, Optional

import click
import typer
from dotenv import load_dotenv
from rich.console import Console
from rich.logging import RichHandler
from typer.core import TyperGroup

# Load env BEFORE importing anything that reads it
load_dotenv()

from src.config import RunConfig, default_log_level, load_config
from src.errors import VerificationError
from src.report import run_bifurcation, run_profile, run_solve
from src.verify import run_verify

logger = logging.getLogger("kirchhoff")
console = Console()

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_VERIFICATION = 3


@contextmanager
def _usage_as_validation() -> Iterator[None]:
    try:
        yield
    except click.UsageError as e:
        # click exits 2 on usage errors; 2 is reserved for solver failures
        e.exit_code = EXIT_VALIDATION
        raise


class KirchhoffGroup(TyperGroup):
    """Reports bad arguments and unknown commands as invalid input."""

    def make_context(self, info_name, args, parent=None, **extra):
        with _usage_as_validation():
            return super().make_context(info_name, args, parent=parent, **extra)

    def invoke(self, ctx: click.Context):
        with _usage_as_validation():
            return super().invoke(ctx)


app = typer.Typer(
    cls=KirchhoffGroup,
    help="Solutions and bifurcation tables for -(a - b||grad u||^2) Laplace u = mu f.",
    add_completion=False,
    no_args_is_help=True,
)


# -------------------------------------------------------------------
# Common helpers
# -------------------------------------------------------------------


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_time=False, show_path=False)],
        force=True,
    )


def _load(config: Path, out: Optional[Path]) -> RunConfig:
    cfg = load_config(config)
    if out is None and "out_dir" not in cfg.model_fields_set and not os.getenv("KIRCHHOFF_OUT_DIR"):
        logger.warning("no out_dir given; writing into ./%s", cfg.out_dir)
    return cfg.with_out_dir(out)


def _execute(action: Callable[[RunConfig], Path], config: Path, out: Optional[Path]) -> None:
    try:
        path = action(_load(config, out))
    except VerificationError as e:
        logger.error("verification failed: %s", e)
        raise typer.Exit(EXIT_VERIFICATION)
    except ValueError as e:
        logger.error("invalid input: %s", e)
        raise typer.Exit(EXIT_VALIDATION)
    except RuntimeError as e:
        logger.error("solver failure: %s", e)
        raise typer.Exit(EXIT_SOLVER)
    console.print(str(path), soft_wrap=True, highlight=False)


ConfigArg = typer.Argument(..., help="Run file with key = value lines.")
OutOption = typer.Option(None, "--out", help="Output directory; overrides out_dir.")


# -------------------------------------------------------------------
# Commands
# -------------------------------------------------------------------


@app.callback()
def main(
    log_level: str = typer.Option(
        default_log_level(), "--log-level", help="Logging level (KIRCHHOFF_LOG_LEVEL)."
    ),
) -> None:
    configure_logging(log_level)


@app.command()
def solve(config: Path = ConfigArg, out: Optional[Path] = OutOption) -> None:
    """Every solution for a single mu, written to solution.txt."""
    _execute(run_solve, config, out)


@app.command()
def bifurcate(config: Path = ConfigArg, out: Optional[Path] = OutOption) -> None:
    """Branch table across mu_min..mu_max, written to bifurcation.csv."""
    _execute(run_bifurcation, config, out)


@app.command()
def verify(config: Path = ConfigArg, out: Optional[Path] = OutOption) -> None:
    """Run the verification suite; exit status 3 if any blocking check fails."""
    _execute(run_verify, config, out)


@app.command()
def profile(config: Path = ConfigArg, out: Optional[Path] = OutOption) -> None:
    """Energy and cubic along the ray t U, written to profile.csv."""
    _execute(run_profile, config, out)


if __name__ == "__main__":
    app()
