import csv
import logging
from pathlib import Path
from typing import List, Optional, Tuple
import numpy as np
from ..exceptions import DatasetError, MalformedLineError
from .dataset import Dataset


logger = logging.getLogger(__name__)


def parse_libsvm_line(line: str, line_number: int) -> Tuple[float, List[Tuple[int, float]]]:
    """Return (label, [(zero_based_index, value), ...]) for one sparse text line."""
    words = line.split()
    try:
        label = float(words[0])
    except ValueError:
        raise MalformedLineError(f"bad label '{words[0]}'", line_number)
    entries = []
    for word in words[1:]:
        index, sep, value = word.partition(":")
        if not sep:
            raise MalformedLineError(f"expected index:value, got '{word}'", line_number)
        try:
            position = int(index)
            number = float(value)
        except ValueError:
            raise MalformedLineError(f"bad entry '{word}'", line_number)
        if position < 1:
            raise MalformedLineError(f"indices are 1-based, got {position}", line_number)
        entries.append((position - 1, number))
    return label, entries


def map_labels(raw: np.ndarray) -> Tuple[np.ndarray, int]:
    """{-1,+1} -> {0,1}; any other label set maps to 0..C-1 in sorted order."""
    values = np.unique(raw)
    if set(values.tolist()) <= {-1.0, 1.0}:
        return (raw > 0).astype(np.int64), 2
    lookup = {value: i for i, value in enumerate(values.tolist())}
    return np.array([lookup[value] for value in raw.tolist()], dtype=np.int64), max(len(values), 2)


def load_libsvm(path, num_features: Optional[int] = None, name: Optional[str] = None) -> Dataset:
    """
    Read a sparse index:value text file into a dense dataset.

    Args:
        path: file to read; rows keep their file order.
        num_features: declared dimension D; an index beyond it is an error.
            Inferred from the largest index when omitted.
    """
    path = Path(path)
    labels, rows = [], []
    max_index = -1
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            label, entries = parse_libsvm_line(line, line_number)
            for index, _ in entries:
                if num_features is not None and index >= num_features:
                    raise MalformedLineError(f"index {index + 1} exceeds declared dimension {num_features}", line_number)
                max_index = max(max_index, index)
            labels.append(label)
            rows.append(entries)

    d = num_features if num_features is not None else max_index + 1
    X = np.zeros((len(rows), max(d, 0)))
    for i, entries in enumerate(rows):
        for index, value in entries:
            X[i, index] = value
    y, num_classes = map_labels(np.array(labels, dtype=np.float64)) if labels else (np.zeros(0, dtype=np.int64), 2)
    logger.info(f"Loaded {len(rows)} rows with {d} features from {path}")
    return Dataset(X=X, y=y, num_classes=num_classes, name=name or path.stem)


def load_csv(path, label_column: str = "label", name: Optional[str] = None) -> Dataset:
    """Read a CSV file with a header row; the label column is named `label`."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path} has no header row")
        if label_column not in header:
            raise DatasetError(f"{path} has no '{label_column}' column")
        label_at = header.index(label_column)
        features, labels = [], []
        for line_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedLineError(f"expected {len(header)} fields, got {len(row)}", line_number)
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                raise MalformedLineError("non-numeric field", line_number)
            labels.append(values.pop(label_at))
            features.append(values)
    names = [column for column in header if column != label_column]
    X = np.array(features, dtype=np.float64).reshape(len(features), len(names))
    y, num_classes = map_labels(np.array(labels)) if labels else (np.zeros(0, dtype=np.int64), 2)
    return Dataset(X=X, y=y, num_classes=num_classes, feature_names=names, name=name or path.stem)
