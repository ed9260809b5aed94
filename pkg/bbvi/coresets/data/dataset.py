from dataclasses import dataclass, replace
from typing import List, Optional, Tuple
import numpy as np
from ..exceptions import DatasetError


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    num_classes: int
    feature_names: Optional[List[str]] = None
    split: str = "all"
    name: str = "dataset"

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise DatasetError(f"X must be a matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DatasetError(f"y must have {X.shape[0]} labels, got shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DatasetError(f"{self.name}: features contain NaN or Inf")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise DatasetError(f"{self.name}: labels must lie in [0, {self.num_classes})")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.n

    def require_nonempty(self) -> "Dataset":
        if self.n == 0:
            raise DatasetError(f"{self.name} ({self.split}) is empty")
        return self

    def subset(self, indices: np.ndarray, split: Optional[str] = None) -> "Dataset":
        indices = np.asarray(indices, dtype=np.int64)
        return replace(self, X=self.X[indices], y=self.y[indices], split=split or self.split)

    def with_classes(self, classes) -> "Dataset":
        mask = np.isin(self.y, list(classes))
        return self.subset(np.flatnonzero(mask))

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=self.num_classes)


def concatenate(first: Dataset, second: Dataset) -> Dataset:
    return replace(first, X=np.vstack([first.X, second.X]), y=np.concatenate([first.y, second.y]),
                   num_classes=max(first.num_classes, second.num_classes))


def stratified_split(dataset: Dataset, test_fraction: float, rng: np.random.Generator) -> Tuple[Dataset, Dataset]:
    """
    Disjoint, exhaustive train/test split keeping class proportions.

    The test set holds exactly round(n * test_fraction) rows; per-class
    shares are allocated by largest remainder.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DatasetError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    counts = dataset.class_counts()
    quotas = counts * test_fraction
    cuts = np.floor(quotas).astype(np.int64)
    missing = int(round(dataset.n * test_fraction)) - int(cuts.sum())
    if missing > 0:
        order = np.argsort(-(quotas - cuts), kind="stable")
        cuts[order[:missing]] += 1
    train_idx, test_idx = [], []
    for label in range(dataset.num_classes):
        members = np.flatnonzero(dataset.y == label)
        members = members[rng.permutation(members.size)]
        test_idx.append(members[:cuts[label]])
        train_idx.append(members[cuts[label]:])
    train = np.sort(np.concatenate(train_idx)) if train_idx else np.zeros(0, dtype=np.int64)
    test = np.sort(np.concatenate(test_idx)) if test_idx else np.zeros(0, dtype=np.int64)
    return dataset.subset(train, "train"), dataset.subset(test, "test")
