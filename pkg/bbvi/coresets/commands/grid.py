from pathlib import Path
import click  # type: ignore
from ..coreset import Coreset
from ..exceptions import CoresetError
from ..experiments import emit_entropy_grid, load_psi
from ..json import read_json
from ..models import ModelSpec, build_model
from ..rng import RandomStreams
from .validate import validate_bounds, validate_resolution


@click.command("entropy-grid")
@click.argument("run_dir", type=click.Path(exists=True, file_okay=False))
@click.option("--trial", required=True, help="Trial stem, e.g. m16-seed0.")
@click.option("--bounds", default="-3,3,-3,3", callback=validate_bounds, help="x1min,x1max,x2min,x2max.")
@click.option("--resolution", default="100", callback=validate_resolution, help="Cells per axis, N or RxC.")
@click.option("--samples", type=int, default=100, help="Posterior samples K.")
@click.option("--seed", type=int, default=0, help="Seed of the evaluation noise.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path; defaults into RUN_DIR.")
def entropy_grid(run_dir, trial, bounds, resolution, samples, seed, out):
    """Writes the predictive entropy over a 2-D grid for a finished trial."""
    folder = Path(run_dir)
    try:
        report = read_json(folder / f"trial-{trial}.json")
        model = build_model(ModelSpec.from_dict(report["model"]))
        psi = load_psi(folder / f"psi-{trial}.json")
        coreset_path = folder / f"coreset-{trial}.json"
        coreset = Coreset.load(coreset_path) if coreset_path.exists() else None
        weight_form = read_json(folder / "config.json")["settings"]["bilevel"]["weight_form"]
        path = emit_entropy_grid(model, psi, coreset, bounds, resolution, Path(out or folder / f"entropy-{trial}.csv"),
                                 samples, RandomStreams(seed).fresh("eval"), weight_form,
                                 corrected=bool(report.get("corrected", True)))
    except (CoresetError, KeyError) as e:
        raise click.ClickException(f"Cannot build the grid: {e}")
    click.secho(f"Grid written to {path}", fg="green")
