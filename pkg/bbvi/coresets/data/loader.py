import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Tuple
from ..exceptions import ConfigurationError
from ..rng import RandomStreams
from .dataset import Dataset, stratified_split
from .libsvm import load_csv, load_libsvm
from .scaling import standardize
from .sources import SOURCES, check_expected, data_dir
from .synthetic import DEFAULT_FOUR_CLASS_CENTERS, gen_four_class, gen_half_moon, gen_synthetic_logreg


logger = logging.getLogger(__name__)

SYNTHETIC = ("half-moon", "four-class", "synthetic-logreg")
FILE_FORMATS = ("libsvm", "csv")


@dataclass(frozen=True)
class DatasetSpec:
    name: str = "half-moon"
    path: Optional[str] = None
    format: str = "libsvm"
    n: int = 1000
    d: int = 2
    noise_std: float = 0.1
    centers: Tuple[Tuple[float, ...], ...] = DEFAULT_FOUR_CLASS_CENTERS
    blob_std: float = 1.0
    test_fraction: float = 0.2
    standardize: bool = True
    num_features: Optional[int] = None

    def __post_init__(self):
        if self.name not in SYNTHETIC and self.name not in SOURCES and self.path is None:
            raise ConfigurationError(f"Dataset '{self.name}' needs a path")
        if self.format not in FILE_FORMATS:
            raise ConfigurationError(f"Unknown dataset format '{self.format}'")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigurationError("dataset.test_fraction must lie in (0, 1)")
        object.__setattr__(self, "centers", tuple(tuple(float(c) for c in center) for center in self.centers))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DatasetSpec":
        return cls(**data)


def load_full(spec: DatasetSpec, streams: RandomStreams) -> Dataset:
    rng = streams.stream("data")
    if spec.name == "half-moon":
        return gen_half_moon(spec.n, spec.noise_std, rng)
    if spec.name == "four-class":
        return gen_four_class(spec.n, rng, spec.centers, spec.blob_std)
    if spec.name == "synthetic-logreg":
        return gen_synthetic_logreg(spec.n, spec.d, rng)

    path = Path(spec.path) if spec.path else data_dir() / SOURCES[spec.name].filename
    if spec.format == "csv":
        dataset = load_csv(path, name=spec.name)
    else:
        dataset = load_libsvm(path, spec.num_features, name=spec.name)
    check_expected(dataset, spec.name)
    return dataset


def load_dataset(spec: DatasetSpec, streams: RandomStreams) -> Tuple[Dataset, Dataset]:
    """Load or generate, split into train/test and (optionally) standardize on train."""
    full = load_full(spec, streams).require_nonempty()
    train, test = stratified_split(full, spec.test_fraction, streams.stream("split"))
    if spec.standardize:
        (train, test), _ = standardize(train, test)
    logger.info(f"{spec.name}: {train.n} train / {test.n} test, {train.d} features, {train.num_classes} classes")
    return train, test
