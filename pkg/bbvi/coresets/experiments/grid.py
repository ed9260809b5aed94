"""Predictive-entropy grids over two-dimensional inputs, for plotting elsewhere."""
import logging
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union
import numpy as np
from ..coreset import Coreset
from ..exceptions import ConfigurationError, ShapeError
from ..models import Model
from ..predict import posterior_predictive, predictive_entropy
from ..variational import VariationalGaussian
from .runner import write_csv


logger = logging.getLogger(__name__)

GRID_FIELDS = ("kind", "x1", "x2", "entropy", "weight")

Bounds = Tuple[Tuple[float, float], Tuple[float, float]]


def grid_points(bounds: Bounds, resolution: Union[int, Sequence[int]]) -> np.ndarray:
    """Cell centres of an r1 x r2 grid, x2 varying fastest."""
    r1, r2 = (resolution, resolution) if isinstance(resolution, int) else tuple(int(r) for r in resolution)
    if r1 < 1 or r2 < 1:
        raise ConfigurationError("grid resolution must be positive")
    (lo1, hi1), (lo2, hi2) = bounds
    if not (hi1 > lo1 and hi2 > lo2):
        raise ConfigurationError(f"empty grid bounds {bounds}")
    x1 = lo1 + (np.arange(r1) + 0.5) * (hi1 - lo1) / r1
    x2 = lo2 + (np.arange(r2) + 0.5) * (hi2 - lo2) / r2
    a, b = np.meshgrid(x1, x2, indexing="ij")
    return np.column_stack([a.reshape(-1), b.reshape(-1)])


def entropy_grid(model: Model, psi: VariationalGaussian, coreset: Optional[Coreset], bounds: Bounds,
                 resolution: Union[int, Sequence[int]], k: int, rng: np.random.Generator,
                 weight_form: str = "exact") -> Tuple[np.ndarray, np.ndarray]:
    """(points (R, 2), predictive entropy (R,)) of the importance-corrected predictive."""
    if model.spec.input_dim != 2:
        raise ShapeError(f"entropy grids need two input features, the model has {model.spec.input_dim}")
    points = grid_points(bounds, resolution)
    noise = rng.standard_normal((k, model.parameter_count))
    probs, _ = posterior_predictive(model, psi, coreset, points, noise, weight_form)
    return points, predictive_entropy(probs)


def emit_entropy_grid(model: Model, psi: VariationalGaussian, coreset: Optional[Coreset], bounds: Bounds,
                      resolution: Union[int, Sequence[int]], path, k: int, rng: np.random.Generator,
                      weight_form: str = "exact", corrected: bool = True) -> Path:
    """
    Write one CSV: a "grid" row per cell (x1, x2, entropy) followed by a
    "coreset" row per coreset point (u, weight). With `corrected` off the
    coreset is listed but does not reweight the predictive.
    """
    points, entropy = entropy_grid(model, psi, coreset if corrected else None, bounds, resolution, k, rng,
                                   weight_form)
    rows = [{"kind": "grid", "x1": float(p[0]), "x2": float(p[1]), "entropy": float(h), "weight": ""}
            for p, h in zip(points, entropy)]
    if coreset is not None:
        for u, w in zip(coreset.u, coreset.weights()):
            rows.append({"kind": "coreset", "x1": float(u[0]), "x2": float(u[1]), "entropy": "", "weight": float(w)})
    path = write_csv(Path(path), GRID_FIELDS, rows)
    logger.info(f"wrote {len(points)} grid cells and {0 if coreset is None else coreset.size} coreset rows to {path}")
    return path
