import click  # type: ignore
from ..data.sources import SOURCES, data_dir, fetch
from ..exceptions import DatasetError


@click.command("fetch-data")
@click.argument("names", nargs=-1)
@click.option("--dir", "directory", type=click.Path(file_okay=False), default=None,
              help="Destination; defaults to $BBVI_DATA_DIR or ./data.")
@click.option("--force", is_flag=True, help="Download even when the file exists.")
def fetch_data(names, directory, force):
    """Downloads the benchmark datasets (phishing, adult, webspam)."""
    names = names or tuple(sorted(SOURCES))
    unknown = [name for name in names if name not in SOURCES]
    if unknown:
        raise click.BadParameter(f"Unknown dataset(s): {', '.join(unknown)}. Known: {', '.join(sorted(SOURCES))}")
    target = data_dir(directory)
    for name in names:
        try:
            path = fetch(name, target, force=force)
        except DatasetError as e:
            raise click.ClickException(str(e))
        click.echo(f"{name}: {path}")
