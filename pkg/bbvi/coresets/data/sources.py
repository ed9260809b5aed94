"""Public benchmark files and the sizes they are expected to have."""
import bz2
import hashlib
import logging
import os
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional
import requests  # type: ignore
from ..exceptions import DatasetError
from .dataset import Dataset


logger = logging.getLogger(__name__)

DATA_DIR_ENV = "BBVI_DATA_DIR"

LIBSVM_BASE_URL = "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/binary"


@dataclass(frozen=True)
class DataSource:
    name: str
    url: str
    filename: str
    num_train: int
    num_test: int
    dim: int

    @property
    def num_total(self) -> int:
        return self.num_train + self.num_test


SOURCES: Dict[str, DataSource] = {
    "phishing": DataSource("phishing", f"{LIBSVM_BASE_URL}/phishing", "phishing", 8844, 2210, 11),
    "adult": DataSource("adult", f"{LIBSVM_BASE_URL}/a9a", "adult", 24130, 6032, 11),
    "webspam": DataSource("webspam", f"{LIBSVM_BASE_URL}/webspam_wc_normalized_unigram.svm.bz2",
                          "webspam", 100948, 25237, 128),
}


def data_dir(override: Optional[str] = None) -> Path:
    return Path(override or os.environ.get(DATA_DIR_ENV, "./data"))


def get_source(name: str) -> DataSource:
    if name not in SOURCES:
        raise DatasetError(f"Unknown dataset '{name}'. Known: {', '.join(sorted(SOURCES))}")
    return SOURCES[name]


def check_expected(dataset: Dataset, name: str) -> bool:
    """Compare a loaded benchmark with its published size; warn on mismatch."""
    source = SOURCES.get(name)
    if source is None:
        return True
    matches = dataset.n == source.num_total and dataset.d == source.dim
    if not matches:
        logger.warning(
            f"{name}: loaded {dataset.n} rows x {dataset.d} features, "
            f"expected {source.num_total} x {source.dim}; upstream files may have changed"
        )
    return matches


def fetch(name: str, directory: Optional[Path] = None, force: bool = False, timeout: float = 60.0) -> Path:
    """
    Download one benchmark file into the data directory.

    Args:
        name: key of `SOURCES`.
        directory: destination; defaults to $BBVI_DATA_DIR or ./data.
        force: download even when the file is already present.

    Returns:
        Path of the (decompressed) text file.
    """
    source = get_source(name)
    directory = Path(directory) if directory is not None else data_dir()
    directory.mkdir(parents=True, exist_ok=True)
    target = directory / source.filename
    if target.exists() and not force:
        logger.info(f"{name} already present at {target}")
        return target

    download = directory / (source.filename + (".bz2" if source.url.endswith(".bz2") else ".part"))
    try:
        response = requests.get(source.url, stream=True, timeout=timeout)
        response.raise_for_status()
        digest = hashlib.sha256()
        with open(download, "wb") as handle:
            for chunk in response.iter_content(8192):
                digest.update(chunk)
                handle.write(chunk)
    except requests.RequestException as e:
        download.unlink(missing_ok=True)
        raise DatasetError(f"Failed to download {name} from {source.url}: {e}")

    logger.info(f"Downloaded {source.url} (sha256:{digest.hexdigest()})")
    if download.suffix == ".bz2":
        with bz2.open(download, "rb") as compressed, open(target, "wb") as handle:
            shutil.copyfileobj(compressed, handle)
        download.unlink()
    else:
        download.replace(target)
    return target
