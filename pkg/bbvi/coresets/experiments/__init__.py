from .continual import run_continual, run_continual_seed
from .grid import emit_entropy_grid, entropy_grid
from .runner import ExperimentOutputs, aggregate_folder, load_psi, run_experiment, run_trial

__all__ = [
    "ExperimentOutputs",
    "aggregate_folder",
    "emit_entropy_grid",
    "entropy_grid",
    "load_psi",
    "run_continual",
    "run_continual_seed",
    "run_experiment",
    "run_trial",
]
