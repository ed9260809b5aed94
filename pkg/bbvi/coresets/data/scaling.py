from dataclasses import dataclass, replace
from typing import List, Tuple
import numpy as np
from .dataset import Dataset


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def inverse(self, X: np.ndarray) -> np.ndarray:
        return X * self.std + self.mean

    def apply(self, dataset: Dataset) -> Dataset:
        return replace(dataset, X=self.transform(dataset.X))


def fit_scaler(train: Dataset) -> Scaler:
    """Per-feature statistics of the training set; constant features are left as they are."""
    mean = train.X.mean(axis=0) if train.n else np.zeros(train.d)
    std = train.X.std(axis=0) if train.n else np.ones(train.d)
    constant = std == 0
    mean = np.where(constant, 0.0, mean)
    std = np.where(constant, 1.0, std)
    return Scaler(mean=mean, std=std)


def standardize(train: Dataset, *others: Dataset) -> Tuple[List[Dataset], Scaler]:
    scaler = fit_scaler(train)
    return [scaler.apply(train)] + [scaler.apply(other) for other in others], scaler
