"""Main entry point for the hsi-detect command-line interface.

Each subcommand loads and validates the run configuration, creates the run
directory named by the config hash, configures logging into it, and hands
off to ``pipeline``. Errors raised by the package are reported on one red
line and mapped to the exit code of their category.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from pathlib import Path

import typer
from rich.console import Console
from rich.markup import escape
from rich.table import Table

from . import pipeline
from .config import RunConfig
from .config import load_config
from .custom_exceptions import HsiDetectError
from .grad_suite import run_grad_suite
from .logging_config import bind_context
from .logging_config import log_operation_error
from .logging_config import log_startup_info
from .logging_config import setup_logging
from .run_layout import RunLayout
from .version_info import __version__

console = Console()

logger = logging.getLogger(__name__)

app = typer.Typer(
    add_completion=False,
    help="Spectral reconstruction and manipulation detection on synthetic hyperspectral data",
    no_args_is_help=True,
)


@dataclass
class CliState:
    verbose: bool = False
    log_json: bool = True


CONFIG_OPTION = typer.Option(None, "--config", "-c", help="JSON run configuration (defaults if omitted)")
SEED_OPTION = typer.Option(None, "--seed", min=0, max=2**64 - 1, help="Override the config seed")


def _state(ctx: typer.Context) -> CliState:
    return ctx.obj if isinstance(ctx.obj, CliState) else CliState()


def _setup_logging(state: CliState, log_file: Path | None = None) -> None:
    level = logging.DEBUG if state.verbose else logging.INFO
    setup_logging(level=level, json_output=state.log_json, log_file=log_file, console_instance=console)


def _run_command(
    ctx: typer.Context,
    command: str,
    config: Path | None,
    seed: int | None,
    body: Callable[[RunConfig, RunLayout], None],
) -> None:
    """Load config, prepare the run directory, run ``body``, map errors to exit codes."""
    state = _state(ctx)
    _setup_logging(state)
    try:
        cfg = load_config(config, seed_override=seed)
        layout = RunLayout.for_config(cfg).create(cfg)
        _setup_logging(state, layout.log_file(command))
        with bind_context(run_id=layout.config_hash, command=command):
            log_startup_info(command)
            try:
                body(cfg, layout)
            except HsiDetectError as exc:
                log_operation_error(command, exc, exit_code=exc.exit_code)
                raise
    except HsiDetectError as exc:
        console.print(f"[red]Error:[/red] {escape(str(exc))}")
        raise typer.Exit(exc.exit_code) from exc


def _print_run_header(layout: RunLayout) -> None:
    console.print(f"[dim]run {layout.config_hash} · dataset {layout.data_hash}[/dim]")


@app.callback()
def cli_main(
    ctx: typer.Context,
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Debug logging"),
    log_json: bool = typer.Option(
        True, "--log-json/--no-log-json", help="Write the run log as JSON lines"
    ),
) -> None:
    """Global options shared by every subcommand."""
    ctx.obj = CliState(verbose=verbose, log_json=log_json)


@app.command("version")
def version() -> None:
    """Print the installed version."""
    console.print(f"hsi-detect {__version__}")


@app.command("gen-data")
def gen_data(ctx: typer.Context, config: Path | None = CONFIG_OPTION, seed: int | None = SEED_OPTION) -> None:
    """Generate the paired synthetic dataset and its manifest."""

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        _print_run_header(layout)
        splits = pipeline.generate_data(cfg, layout)
        table = Table(title="[bold cyan]Dataset partitions[/bold cyan]", header_style="bold blue")
        table.add_column("Partition", style="cyan")
        table.add_column("Real", justify="right")
        table.add_column("Fake", justify="right")
        for name, counts in pipeline.partition_counts(splits).items():
            table.add_row(name, str(counts["real"]), str(counts["fake"]))
        console.print(table)
        console.print(f"[green]Manifest written to {layout.manifest}[/green]")

    _run_command(ctx, "gen-data", config, seed, body)


@app.command("pretrain-hsr")
def pretrain_hsr(ctx: typer.Context, config: Path | None = CONFIG_OPTION, seed: int | None = SEED_OPTION) -> None:
    """Pretrain the RGB → hyperspectral reconstruction network."""

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        _print_run_header(layout)
        result = pipeline.pretrain_hsr(cfg, layout)
        result.history.display_summary(console)
        if result.val_mrae:
            step, value = result.val_mrae[-1]
            console.print(f"Held-out MRAE at step {step}: [bold]{value:.4f}[/bold]")
        console.print(f"[green]Checkpoint written to {layout.hsr_checkpoint}[/green]")

    _run_command(ctx, "pretrain-hsr", config, seed, body)


@app.command("train-detector")
def train_detector(ctx: typer.Context, config: Path | None = CONFIG_OPTION, seed: int | None = SEED_OPTION) -> None:
    """Train the detector on the training partition."""

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        _print_run_header(layout)
        splits = pipeline.load_splits(layout)
        hsr = pipeline.frozen_hsr(cfg, layout)
        run = pipeline.train_detector_run(cfg, layout, splits, hsr=hsr)
        run.result.history.display_summary(console)
        console.print(f"[green]Checkpoint written to {run.checkpoint}[/green]")

    _run_command(ctx, "train-detector", config, seed, body)


@app.command("eval")
def evaluate(
    ctx: typer.Context,
    config: Path | None = CONFIG_OPTION,
    checkpoint: Path | None = typer.Option(None, "--checkpoint", help="Detector checkpoint (default: run's)"),
    seed: int | None = SEED_OPTION,
) -> None:
    """Cross-manipulation AUC of a trained detector."""

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        _print_run_header(layout)
        table = pipeline.evaluate_run(cfg, layout, checkpoint)
        table.display(console)
        console.print(f"[green]Report written to {layout.reports}[/green]")

    _run_command(ctx, "eval", config, seed, body)


@app.command("reconstruct")
def reconstruct(
    ctx: typer.Context,
    input_path: Path = typer.Option(..., "--input", "-i", help="HS1 file with 3 or 31 channels"),
    config: Path | None = CONFIG_OPTION,
    checkpoint: Path | None = typer.Option(None, "--checkpoint", help="Reconstruction checkpoint"),
    output: Path | None = typer.Option(None, "--output", "-o", help="Output HS1 path"),
    dump_bands: bool = typer.Option(False, "--dump-bands", help="Also write one PGM per band"),
    seed: int | None = SEED_OPTION,
) -> None:
    """Reconstruct a 31-band cube from an RGB (or projected 31-band) HS1 file."""

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        written, bands = pipeline.reconstruct_file(
            cfg, layout, input_path, checkpoint=checkpoint, output=output, dump_bands=dump_bands
        )
        console.print(f"[green]Reconstruction written to {written}[/green]")
        if bands:
            console.print(f"{len(bands)} band images in {bands[0].parent}")

    _run_command(ctx, "reconstruct", config, seed, body)


@app.command("grad-check")
def grad_check(
    ctx: typer.Context,
    config: Path | None = CONFIG_OPTION,
    seed: int | None = SEED_OPTION,
    trials: int = typer.Option(20, "--trials", min=1, help="Random instances per primitive"),
) -> None:
    """Finite-difference check of the engine, the reconstruction stage and the detector loss."""
    failed = False

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        nonlocal failed
        report = run_grad_suite(seed=cfg.seed, trials=trials)
        report.display(console)
        console.print(f"[dim]{len(report.sites)} sites in {report.seconds:.1f}s[/dim]")
        failed = not report.passed
        if failed:
            console.print("[red]Gradient check failed[/red]")
        else:
            console.print("[green]All gradient sites within tolerance[/green]")

    _run_command(ctx, "grad-check", config, seed, body)
    if failed:
        raise typer.Exit(1)


@app.command("run-protocol")
def run_protocol(ctx: typer.Context, config: Path | None = CONFIG_OPTION, seed: int | None = SEED_OPTION) -> None:
    """Train one detector per manipulation kind and evaluate each on every kind."""

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        _print_run_header(layout)
        table = pipeline.run_protocol(cfg, layout)
        table.display(console)
        console.print(f"[green]Report written to {layout.reports}[/green]")

    _run_command(ctx, "run-protocol", config, seed, body)


@app.command("ablate")
def ablate(ctx: typer.Context, config: Path | None = CONFIG_OPTION, seed: int | None = SEED_OPTION) -> None:
    """Compare hyperspectral- and RGB-input detectors over the ablation seeds."""

    def body(cfg: RunConfig, layout: RunLayout) -> None:
        _print_run_header(layout)
        report = pipeline.run_ablation(cfg, layout)
        report.display(console)

    _run_command(ctx, "ablate", config, seed, body)


if __name__ == "__main__":
    app()
