import json
from pathlib import Path
from typing import Any
import numpy as np
from .exceptions import ArtifactError


class NumpyEncoder(json.JSONEncoder):
    """Plain decimal encoding for reports: arrays become lists, numpy scalars become Python numbers."""

    def default(self, obj):
        if isinstance(obj, np.ndarray):
            return obj.tolist()
        if isinstance(obj, np.integer):
            return int(obj)
        if isinstance(obj, np.floating):
            return float(obj)
        if isinstance(obj, np.bool_):
            return bool(obj)
        if isinstance(obj, Path):
            return str(obj)
        if hasattr(obj, "to_dict"):
            return obj.to_dict()
        return super().default(obj)


def hex_array(array: np.ndarray) -> dict:
    """Exact encoding of a float array as float.hex strings."""
    array = np.asarray(array, dtype=np.float64)
    return {"shape": list(array.shape), "hex": [float(x).hex() for x in array.reshape(-1)]}


def unhex_array(data: dict) -> np.ndarray:
    try:
        values = np.array([float.fromhex(x) for x in data["hex"]], dtype=np.float64)
        return values.reshape(tuple(data["shape"]))
    except (KeyError, TypeError, ValueError) as e:
        raise ArtifactError(f"Malformed array entry: {e}")


def dumps(obj: Any, indent: int | None = 2) -> str:
    """Canonical JSON: sorted keys, numpy-aware."""
    return json.dumps(obj, cls=NumpyEncoder, sort_keys=True, indent=indent)


def write_json(path, obj: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj) + "\n", encoding="utf-8")
    return path


def read_json(path) -> Any:
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, OSError) as e:
        raise ArtifactError(f"Cannot read {path}: {e}")
