import click  # type: ignore
from ..logging import configure_logging
from .data import fetch_data
from .experiment import continual, run, sweep
from .grid import entropy_grid


@click.group()
@click.option("--log-level", default="INFO", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"],
                                                               case_sensitive=False))
@click.option("--log-json", is_flag=True, help="Emit JSON-lines log records.")
def cli(log_level, log_json):
    """Black-box coreset variational inference"""
    configure_logging(log_level, log_json)

cli.add_command(run)
cli.add_command(sweep)
cli.add_command(continual)
cli.add_command(fetch_data)
cli.add_command(entropy_grid)

if __name__ == "__main__":
    cli()
