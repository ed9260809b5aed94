from typing import Optional, Sequence
import numpy as np
from .dataset import Dataset

DEFAULT_FOUR_CLASS_CENTERS = ((-2.0, -2.0), (2.0, -2.0), (-2.0, 2.0), (2.0, 2.0))


def gen_half_moon(n: int, noise_std: float = 0.1, rng: Optional[np.random.Generator] = None) -> Dataset:
    """Two interleaved unit semicircles with isotropic Gaussian noise, n/2 points each."""
    rng = rng if rng is not None else np.random.default_rng(0)
    n_upper = n - n // 2
    n_lower = n // 2
    t_upper = rng.uniform(0.0, np.pi, n_upper)
    t_lower = rng.uniform(0.0, np.pi, n_lower)
    upper = np.column_stack([np.cos(t_upper), np.sin(t_upper)])
    lower = np.column_stack([1.0 - np.cos(t_lower), 0.5 - np.sin(t_lower)])
    X = np.vstack([upper, lower])
    if noise_std > 0:
        X = X + noise_std * rng.standard_normal(X.shape)
    y = np.concatenate([np.zeros(n_upper, dtype=np.int64), np.ones(n_lower, dtype=np.int64)])
    return Dataset(X=X, y=y, num_classes=2, name="half-moon")


def gen_four_class(n: int, rng: Optional[np.random.Generator] = None,
                   centers: Sequence[Sequence[float]] = DEFAULT_FOUR_CLASS_CENTERS, std: float = 1.0) -> Dataset:
    """Balanced mixture of Gaussian blobs, one class per blob."""
    rng = rng if rng is not None else np.random.default_rng(0)
    centers = np.asarray(centers, dtype=np.float64)
    classes = centers.shape[0]
    counts = [n // classes + (1 if c < n % classes else 0) for c in range(classes)]
    X = np.vstack([centers[c] + std * rng.standard_normal((count, centers.shape[1])) for c, count in enumerate(counts)])
    y = np.concatenate([np.full(count, c, dtype=np.int64) for c, count in enumerate(counts)])
    return Dataset(X=X, y=y, num_classes=classes, name="four-class")


def gen_synthetic_logreg(n: int, d: int, rng: Optional[np.random.Generator] = None, scale: float = 5.0) -> Dataset:
    """x ~ N(0, I_d); y ~ Bernoulli(sigmoid(scale * sum(x)))."""
    rng = rng if rng is not None else np.random.default_rng(0)
    X = rng.standard_normal((n, d))
    logits = scale * X.sum(axis=1)
    probabilities = 0.5 * (1.0 + np.tanh(0.5 * logits))
    y = (rng.uniform(size=n) < probabilities).astype(np.int64)
    return Dataset(X=X, y=y, num_classes=2, name=f"synthetic-logreg-d{d}")
