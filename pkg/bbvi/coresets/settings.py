"""
Experiment configuration.

An experiment is one TOML document::

    name = "phishing-psvi"
    method = "bb-psvi"
    seeds = [0, 1, 2]
    coreset_sizes = [10, 40]

    [dataset]
    name = "phishing"

    [bilevel]
    outer_iterations = 500

    [bilevel.outer_lrs]
    u = 1e-3

Tables: [dataset] (DatasetSpec), [model] (ModelSpec), [coreset] (method
settings), [bilevel] (BilevelConfig), [evaluation] (eval_every,
eval_samples) and [continual]. Published presets for the dataset fill every
key the document leaves out, and `--override key=value` strings are applied
last.
"""
import json
import logging
import tomllib
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple
from .algorithms import MethodSettings
from .data.loader import DatasetSpec
from .exceptions import ConfigurationError
from .models import ModelSpec
from .optim import BilevelConfig
from .presets import merge, preset_for
from .registry import SIZE_FREE_METHODS, method_registry
from .utils import config_hash


logger = logging.getLogger(__name__)

TOP_LEVEL_KEYS = ("name", "method", "seeds", "coreset_sizes", "workers", "output_dir")
TABLES = ("dataset", "model", "coreset", "bilevel", "evaluation", "continual")
EVALUATION_KEYS = ("eval_every", "eval_samples")


def convert_to_bool(value):
    if isinstance(value, str):
        value = value.strip().lower()
        if value in ["true", "1", "yes"]:
            return True
        elif value in ["false", "0", "no"]:
            return False
    elif isinstance(value, (int, bool)):
        return bool(value)
    return None


def parse_value(text: str) -> Any:
    """Parse an override value: bool, int, float, JSON list, comma list or string."""
    text = text.strip()
    as_bool = convert_to_bool(text) if text.lower() in ("true", "false", "yes", "no") else None
    if as_bool is not None:
        return as_bool
    if text.startswith("["):
        try:
            return json.loads(text)
        except json.JSONDecodeError:
            raise ConfigurationError(f"Malformed list value '{text}'")
    if "," in text:
        return [parse_value(part) for part in text.split(",") if part.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _known(cls, data: dict, table: str) -> dict:
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigurationError(f"Unknown keys in [{table}]: {', '.join(sorted(unknown))}")
    return data


@dataclass(frozen=True)
class ContinualSpec:
    """
    Class-incremental schedule.

    Attributes:
        tasks: classes introduced by each task, in order.
        coreset_sizes: total coreset size after each task.
        replay: replace past data by draws from the coreset; False trains
            each task on its fresh data only.
    """
    tasks: Tuple[Tuple[int, ...], ...] = ((0, 1), (2,), (3,))
    coreset_sizes: Tuple[int, ...] = (10, 15, 20)
    replay: bool = True

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(tuple(int(c) for c in task) for task in self.tasks))
        object.__setattr__(self, "coreset_sizes", tuple(int(m) for m in self.coreset_sizes))
        if not self.tasks or any(not task for task in self.tasks):
            raise ConfigurationError("continual.tasks needs at least one nonempty task")
        seen = [c for task in self.tasks for c in task]
        if len(seen) != len(set(seen)):
            raise ConfigurationError("continual.tasks must introduce each class once")
        if len(self.coreset_sizes) != len(self.tasks):
            raise ConfigurationError("continual.coreset_sizes needs one entry per task")
        if any(a > b for a, b in zip(self.coreset_sizes, self.coreset_sizes[1:])):
            raise ConfigurationError("continual.coreset_sizes must not shrink")

    def to_dict(self) -> dict:
        return {"tasks": [list(t) for t in self.tasks], "coreset_sizes": list(self.coreset_sizes),
                "replay": self.replay}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    method: str
    dataset: DatasetSpec
    model: ModelSpec
    settings: MethodSettings
    seeds: Tuple[int, ...] = (0,)
    coreset_sizes: Tuple[int, ...] = (10,)
    workers: int = 1
    output_dir: str = "runs"
    continual: Optional[ContinualSpec] = None

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "coreset_sizes", tuple(int(m) for m in self.coreset_sizes))
        if self.method not in method_registry:
            raise ConfigurationError(f"Unknown method '{self.method}' (known: {', '.join(method_registry.names())})")
        if not self.seeds:
            raise ConfigurationError("seeds must not be empty")
        if not self.coreset_sizes and self.method not in SIZE_FREE_METHODS:
            raise ConfigurationError(f"method '{self.method}' needs at least one coreset size")
        if any(m < 1 for m in self.coreset_sizes):
            raise ConfigurationError("coreset sizes must be positive")
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")

    @property
    def sizes(self) -> Tuple[Optional[int], ...]:
        """Coreset sizes to run; a single None for size-free methods."""
        return (None,) if self.method in SIZE_FREE_METHODS else self.coreset_sizes

    def settings_for(self, size: Optional[int], seed: int) -> MethodSettings:
        bilevel = replace(self.settings.bilevel, seed=seed)
        if size is None:
            return replace(self.settings, bilevel=bilevel)
        return replace(self.settings, coreset_size=size, bilevel=bilevel)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "method": self.method,
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "settings": self.settings.to_dict(),
            "seeds": list(self.seeds),
            "coreset_sizes": list(self.coreset_sizes),
            "workers": self.workers,
            "output_dir": self.output_dir,
            "continual": None if self.continual is None else self.continual.to_dict(),
        }

    def hash_payload(self) -> dict:
        """The resolved config minus keys that cannot change results."""
        payload = self.to_dict()
        payload.pop("output_dir")
        payload.pop("workers")
        return payload

    @property
    def config_hash(self) -> str:
        return config_hash(self.hash_payload())


class SettingsLoader:
    """
    Typed, dotted-key access to an experiment document.

    Attributes:
        document (dict): the parsed TOML tables, presets not yet applied.
        source (Path): file the document was read from, if any.
    """

    def __init__(self, document: Optional[dict] = None, source: Optional[Path] = None):
        self.document = dict(document or {})
        self.source = source

    @classmethod
    def from_file(cls, path) -> "SettingsLoader":
        path = Path(path)
        try:
            with open(path, "rb") as f:
                document = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigurationError(f"Config file not found: {path}")
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(f"Invalid TOML in {path}: {e}")
        return cls(document, path)

    def get_setting(self, key: str, default=None):
        """
        Retrieves a value by its dotted key, e.g. "bilevel.outer_lrs.u".

        Args:
            key (str): The dotted key of the setting to retrieve.
            default: The value to return if the setting is not found.
        """
        node = self.document
        for part in key.split("."):
            if not isinstance(node, dict) or part not in node:
                return default
            node = node[part]
        return node

    def set_setting(self, key: str, value) -> None:
        parts = key.split(".")
        node = self.document
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            elif not isinstance(child, dict):
                raise ConfigurationError(f"Cannot set '{key}': '{part}' is not a table")
            node = child
        node[parts[-1]] = value

    def get_int(self, key: str, default: int = 0) -> int:
        value = self.get_setting(key, default)
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"'{key}' must be an integer, got {value!r}")

    def get_float(self, key: str, default: float = 0.0) -> float:
        value = self.get_setting(key, default)
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"'{key}' must be a number, got {value!r}")

    def get_bool(self, key: str, default: bool = False) -> bool:
        value = convert_to_bool(self.get_setting(key, default))
        if value is None:
            raise ConfigurationError(f"'{key}' must be a boolean")
        return value

    def get_str(self, key: str, default: str = "") -> str:
        return str(self.get_setting(key, default))

    def get_list(self, key: str, default: Optional[list] = None) -> list:
        value = self.get_setting(key, [] if default is None else default)
        if isinstance(value, str):
            value = parse_value(value)
        return list(value) if isinstance(value, (list, tuple)) else [value]

    def apply_overrides(self, overrides: Iterable[str]) -> None:
        """Apply `key=value` strings, e.g. "bilevel.inner_steps=10"."""
        for item in overrides:
            key, sep, text = item.partition("=")
            if not sep or not key.strip():
                raise ConfigurationError(f"Override '{item}' is not of the form key=value")
            key = key.strip()
            root = key.split(".")[0]
            if root not in TOP_LEVEL_KEYS and root not in TABLES:
                raise ConfigurationError(f"Unknown config key '{key}'")
            self.set_setting(key, parse_value(text))
            logger.debug(f"override {key} = {text}")

    def resolved(self) -> dict:
        """The document laid over the presets of its dataset and method."""
        method = self.get_str("method", "bb-psvi")
        dataset = self.get_str("dataset.name", "half-moon")
        preset = preset_for(dataset, method)
        kind = self.get_setting("model.kind")
        if kind is not None and preset.get("model", {}).get("kind") != kind:
            preset.pop("model", None)
        return merge(preset, self.document)

    def build(self) -> ExperimentConfig:
        document = self.resolved()
        unknown = set(document) - set(TOP_LEVEL_KEYS) - set(TABLES)
        if unknown:
            raise ConfigurationError(f"Unknown top-level keys: {', '.join(sorted(unknown))}")
        view = SettingsLoader(document)

        dataset = DatasetSpec.from_dict(_known(DatasetSpec, dict(document.get("dataset", {})), "dataset"))
        model = ModelSpec.from_dict(_known(ModelSpec, dict(document.get("model", {})), "model"))
        bilevel = BilevelConfig.from_dict(_known(BilevelConfig, dict(document.get("bilevel", {})), "bilevel"))

        evaluation = dict(document.get("evaluation", {}))
        extra = set(evaluation) - set(EVALUATION_KEYS)
        if extra:
            raise ConfigurationError(f"Unknown keys in [evaluation]: {', '.join(sorted(extra))}")
        coreset = {**dict(document.get("coreset", {})), **evaluation}
        if "bilevel" in coreset:
            raise ConfigurationError("bilevel settings belong in the [bilevel] table")
        _known(MethodSettings, coreset, "coreset")
        if "prune_sizes" in coreset:
            coreset["prune_sizes"] = tuple(coreset["prune_sizes"])

        sizes = [int(m) for m in view.get_list("coreset_sizes", [coreset.get("coreset_size", 10)])]
        if sizes:
            coreset.setdefault("coreset_size", sizes[0])
        settings = MethodSettings(bilevel=bilevel, **coreset)

        continual = None
        if "continual" in document:
            continual = ContinualSpec(**_known(ContinualSpec, dict(document["continual"]), "continual"))

        name = view.get_str("name", "") or f"{dataset.name}-{view.get_str('method', 'bb-psvi')}"
        config = ExperimentConfig(
            name=name,
            method=view.get_str("method", "bb-psvi"),
            dataset=dataset,
            model=model,
            settings=settings,
            seeds=tuple(int(s) for s in view.get_list("seeds", [0])),
            coreset_sizes=tuple(sizes),
            workers=view.get_int("workers", 1),
            output_dir=view.get_str("output_dir", "runs"),
            continual=continual,
        )
        logger.debug(f"resolved config {config.name} ({config.config_hash[:12]})")
        return config


def load_config(path=None, overrides: Iterable[str] = (), **flags) -> ExperimentConfig:
    """
    Read a config file (or start from defaults), apply CLI flags then overrides.

    Args:
        path: TOML file; None for an all-defaults document.
        overrides: `key=value` strings.
        flags: top-level keys set from CLI flags (None values are ignored).
    """
    loader = SettingsLoader.from_file(path) if path is not None else SettingsLoader()
    for key, value in flags.items():
        if value is not None:
            loader.set_setting(key, value)
    loader.apply_overrides(overrides)
    return loader.build()


def load_settings_document(config: ExperimentConfig) -> Dict[str, Any]:
    """Resolved configuration as written next to every run."""
    return {**config.to_dict(), "config_hash": config.config_hash}

