import sys
from pathlib import Path
from typing import Optional, Tuple
import click  # type: ignore
from ..exceptions import CoresetError, RunFailedError
from ..experiments import run_continual, run_experiment
from ..settings import ExperimentConfig, load_config
from .validate import validate_override


def config_options(func):
    """Options shared by every training command."""
    options = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="Experiment TOML file."),
        click.option("--seed", "seeds", type=int, multiple=True, help="Seed(s); replaces the file's seeds."),
        click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory."),
        click.option("--method", "methods", multiple=True, help="Training method."),
        click.option("--coreset-size", "sizes", type=int, multiple=True, help="Coreset size(s) M."),
        click.option("--override", "overrides", multiple=True, callback=validate_override,
                     help="key=value applied after the file, e.g. bilevel.inner_steps=10."),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def build_config(config_path: Optional[str], seeds: Tuple[int, ...], method: Optional[str],
                 sizes: Tuple[int, ...], overrides: Tuple[str, ...], out: Optional[str]) -> ExperimentConfig:
    try:
        return load_config(
            config_path,
            overrides,
            seeds=list(seeds) or None,
            method=method,
            coreset_sizes=list(sizes) or None,
            output_dir=out,
        )
    except CoresetError as e:
        raise click.ClickException(f"Invalid configuration: {e}")


def _run(config: ExperimentConfig) -> Path:
    click.echo(f"Running {config.method} on {config.dataset.name} ({config.config_hash[:12]})")
    outputs = run_experiment(config)
    for path in outputs.errors:
        click.secho(f"Trial failed, see {path}", fg="red", err=True)
    if outputs.aggregate is not None:
        click.echo(outputs.aggregate.read_text(encoding="utf-8"))
    if not outputs.ok:
        sys.exit(1)
    click.secho(f"Reports written to {outputs.folder}", fg="green")
    return outputs.folder


@click.command("run")
@config_options
def run(config_path, seeds, out, methods, sizes, overrides):
    """Trains and evaluates one method over its seeds and coreset sizes."""
    if len(methods) > 1:
        raise click.BadParameter("run takes one --method; use sweep for several.")
    config = build_config(config_path, seeds, methods[0] if methods else None, sizes, overrides, out)
    _run(config)


@click.command("sweep")
@config_options
def sweep(config_path, seeds, out, methods, sizes, overrides):
    """Runs several methods over the same coreset sizes, one report folder each."""
    failed = []
    for method in methods or (None,):
        config = build_config(config_path, seeds, method, sizes, overrides, out)
        try:
            _run(config)
        except SystemExit:
            failed.append(config.method)
    if failed:
        raise click.ClickException(f"Failed methods: {', '.join(failed)}")


@click.command("continual")
@config_options
@click.option("--no-replay", is_flag=True, help="Ablation: train each task on its fresh data only.")
def continual(config_path, seeds, out, methods, sizes, overrides, no_replay):
    """Class-incremental schedule with the coreset as replay memory."""
    if sizes:
        raise click.BadParameter("set continual.coreset_sizes with --override for the task schedule.")
    extra = ("continual.replay=false",) if no_replay else ()
    config = build_config(config_path, seeds, methods[0] if methods else None, (), overrides + extra, out)
    try:
        folder = run_continual(config)
    except RunFailedError as e:
        for path in e.errors:
            click.secho(f"Seed failed, see {path}", fg="red", err=True)
        raise click.ClickException(f"Continual run failed: {e}")
    except CoresetError as e:
        raise click.ClickException(f"Continual run failed: {e}")
    click.echo((folder / "continual.csv").read_text(encoding="utf-8"))
    click.secho(f"Reports written to {folder}", fg="green")
