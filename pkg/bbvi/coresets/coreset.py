"""
Coreset state and weight parametrizations.

A coreset holds M pseudo-inputs `u`, their outputs `z` (class indices, or
label logits when soft labels are enabled) and the machinery that turns
trainable parameters into nonnegative likelihood weights `v`:

    fixed-ratio    v = (N / M) * 1
    free-nonneg    v = v_raw, projected onto v >= 0 after every update
    softmax        v = N * softmax(beta)
    softmax-alpha  v = alpha * N * softmax(beta)
    unit           v = 1
"""
import copy
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence
import numpy as np
from .autodiff import ops
from .autodiff.tape import Node, Tape
from .data.dataset import Dataset
from .exceptions import ArtifactError, ConfigurationError, DatasetError, ShapeError
from .json import hex_array, read_json, unhex_array, write_json
from .models import Model
from .utils import match_version


logger = logging.getLogger(__name__)

FIXED_RATIO = "fixed-ratio"
FREE_NONNEG = "free-nonneg"
SOFTMAX = "softmax"
SOFTMAX_ALPHA = "softmax-alpha"
UNIT = "unit"
WEIGHT_MODES = (FIXED_RATIO, FREE_NONNEG, SOFTMAX, SOFTMAX_ALPHA, UNIT)

GROUPS = ("u", "z", "beta", "v", "alpha")

INIT_STRATEGIES = ("subset", "gaussian")

SOFT_LABEL_INIT_LOGIT = 5.0

FORMAT_VERSION = "1.0.0"
SUPPORTED_FORMATS = ">=1.0.0,<2.0.0"


def trainable_groups(weight_mode: str, learn_locations: bool = True, soft_labels: bool = False) -> Dict[str, bool]:
    """Which parameter groups carry gradients for a weight mode."""
    return {
        "u": learn_locations,
        "z": learn_locations and soft_labels,
        "beta": weight_mode in (SOFTMAX, SOFTMAX_ALPHA),
        "v": weight_mode == FREE_NONNEG,
        "alpha": weight_mode == SOFTMAX_ALPHA,
    }


@dataclass
class Coreset:
    u: np.ndarray
    z: np.ndarray
    num_classes: int
    n: int
    weight_mode: str = SOFTMAX
    beta: Optional[np.ndarray] = None
    v_raw: Optional[np.ndarray] = None
    alpha: float = 1.0
    soft_labels: bool = False
    trainable: Dict[str, bool] = field(default_factory=dict)
    source_indices: Optional[np.ndarray] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigurationError(f"Unknown weight mode '{self.weight_mode}'")
        self.u = np.array(self.u, dtype=np.float64)
        if self.u.ndim != 2:
            raise ShapeError(f"u must be an (M, D) matrix, got shape {self.u.shape}")
        m = self.size
        if self.soft_labels:
            self.z = np.array(self.z, dtype=np.float64).reshape(m, self.num_classes)
        else:
            self.z = np.array(self.z, dtype=np.int64).reshape(m)
        self.beta = np.zeros(m) if self.beta is None else np.array(self.beta, dtype=np.float64).reshape(m)
        if self.v_raw is None:
            self.v_raw = np.full(m, self.n / m) if m else np.zeros(0)
        else:
            self.v_raw = np.array(self.v_raw, dtype=np.float64).reshape(m)
        if self.source_indices is not None:
            self.source_indices = np.array(self.source_indices, dtype=np.int64).reshape(m)
        defaults = trainable_groups(self.weight_mode, soft_labels=self.soft_labels)
        self.trainable = {group: bool(self.trainable.get(group, defaults[group])) for group in GROUPS}

    @property
    def size(self) -> int:
        return int(self.u.shape[0])

    @property
    def dim(self) -> int:
        return int(self.u.shape[1])

    def copy(self) -> "Coreset":
        return copy.deepcopy(self)

    def label_probs(self) -> np.ndarray:
        """(M, C) label distributions; one-hot for hard labels."""
        if self.soft_labels:
            shifted = self.z - self.z.max(axis=1, keepdims=True)
            probs = np.exp(shifted)
            return probs / probs.sum(axis=1, keepdims=True)
        return np.eye(self.num_classes)[self.z]

    def hard_labels(self) -> np.ndarray:
        return np.argmax(self.z, axis=1) if self.soft_labels else self.z

    def weights(self) -> np.ndarray:
        """Materialized weights as a plain array."""
        tape = Tape()
        with tape.no_record():
            return np.array(materialize_weights(self.to_nodes(tape, register=False)).value)

    def project(self) -> None:
        """Keep free weights nonnegative."""
        if self.weight_mode == FREE_NONNEG:
            self.v_raw = np.maximum(self.v_raw, 0.0)

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.weights() > 0)

    def to_nodes(self, tape: Tape, register: bool = True, prefix: str = "coreset") -> "CoresetNodes":
        """Trainable groups become tape variables, the rest constants."""
        def leaf(group, value):
            if register and self.trainable[group]:
                return tape.variable(f"{prefix}.{group}", value)
            return tape.constant(value)

        return CoresetNodes(
            coreset=self,
            u=leaf("u", self.u),
            z=leaf("z", self.z) if self.soft_labels else None,
            beta=leaf("beta", self.beta),
            v_raw=leaf("v", self.v_raw),
            alpha=leaf("alpha", np.array(self.alpha)),
        )

    def update(self, values: Dict[str, np.ndarray]) -> None:
        """Write back trained group values keyed by group name."""
        for group, value in values.items():
            if group == "u":
                self.u = np.array(value, dtype=np.float64)
            elif group == "z":
                self.z = np.array(value, dtype=np.float64)
            elif group == "beta":
                self.beta = np.array(value, dtype=np.float64)
            elif group == "v":
                self.v_raw = np.array(value, dtype=np.float64)
            elif group == "alpha":
                self.alpha = float(np.asarray(value))
            else:
                raise KeyError(group)
        self.project()

    def attach(self, x: np.ndarray, label: int, index: int, weight: float = 0.0) -> "Coreset":
        """A copy with one more real datapoint (dataset row `index`) at weight `weight`."""
        z_row = (SOFT_LABEL_INIT_LOGIT * np.eye(self.num_classes)[label])[None, :] if self.soft_labels else [label]
        sources = np.zeros(0, dtype=np.int64) if self.source_indices is None else self.source_indices
        return Coreset(
            u=np.vstack([self.u, np.asarray(x, dtype=np.float64).reshape(1, -1)]),
            z=np.concatenate([self.z, np.asarray(z_row, dtype=self.z.dtype)]),
            num_classes=self.num_classes, n=self.n, weight_mode=self.weight_mode,
            beta=np.append(self.beta, 0.0), v_raw=np.append(self.v_raw, weight), alpha=self.alpha,
            soft_labels=self.soft_labels, trainable=dict(self.trainable),
            source_indices=np.append(sources, index), seed=self.seed,
        )

    def select(self, keep: np.ndarray, v_raw: Optional[np.ndarray] = None) -> "Coreset":
        """A copy restricted to the points `keep`."""
        keep = np.asarray(keep, dtype=np.int64)
        return Coreset(
            u=self.u[keep], z=self.z[keep], num_classes=self.num_classes, n=self.n, weight_mode=self.weight_mode,
            beta=self.beta[keep], v_raw=self.v_raw[keep] if v_raw is None else v_raw, alpha=self.alpha,
            soft_labels=self.soft_labels, trainable=dict(self.trainable),
            source_indices=None if self.source_indices is None else self.source_indices[keep], seed=self.seed,
        )

    def group_values(self) -> Dict[str, np.ndarray]:
        return {
            "u": self.u, "z": self.z, "beta": self.beta, "v": self.v_raw, "alpha": np.array(self.alpha),
        }

    # --- persistence ---

    def to_dict(self, model_hash: Optional[str] = None) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "weight_mode": self.weight_mode,
            "num_classes": self.num_classes,
            "n": self.n,
            "m": self.size,
            "soft_labels": self.soft_labels,
            "seed": self.seed,
            "model_hash": model_hash,
            "trainable": self.trainable,
            "u": hex_array(self.u),
            "z": hex_array(self.z) if self.soft_labels else self.z.tolist(),
            "beta": hex_array(self.beta),
            "v_raw": hex_array(self.v_raw),
            "alpha": float(self.alpha).hex(),
            "source_indices": None if self.source_indices is None else self.source_indices.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Coreset":
        version = data.get("format_version", "")
        if not match_version(version, SUPPORTED_FORMATS):
            raise ArtifactError(f"Unsupported coreset format '{version}' (supported: {SUPPORTED_FORMATS})")
        try:
            soft = bool(data["soft_labels"])
            u = unhex_array(data["u"])
            return cls(
                u=u,
                z=unhex_array(data["z"]) if soft else np.array(data["z"], dtype=np.int64),
                num_classes=int(data["num_classes"]),
                n=int(data["n"]),
                weight_mode=data["weight_mode"],
                beta=unhex_array(data["beta"]),
                v_raw=unhex_array(data["v_raw"]),
                alpha=float.fromhex(data["alpha"]),
                soft_labels=soft,
                trainable=dict(data.get("trainable") or {}),
                source_indices=data.get("source_indices"),
                seed=data.get("seed"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ArtifactError(f"Malformed coreset artifact: {e}")

    def save(self, path, model_hash: Optional[str] = None) -> Path:
        return write_json(path, self.to_dict(model_hash))

    @classmethod
    def load(cls, path) -> "Coreset":
        return cls.from_dict(read_json(path))


@dataclass
class CoresetNodes:
    coreset: Coreset
    u: Node
    z: Optional[Node]
    beta: Node
    v_raw: Node
    alpha: Node

    def variables(self) -> Dict[str, Node]:
        """Trainable leaves keyed by group name."""
        out = {}
        for group, node in (("u", self.u), ("z", self.z), ("beta", self.beta), ("v", self.v_raw), ("alpha", self.alpha)):
            if node is not None and node.name is not None:
                out[group] = node
        return out


def materialize_weights(nodes: CoresetNodes) -> Node:
    """Nonnegative weights v, an (M,) node differentiable in beta, alpha and v_raw."""
    coreset = nodes.coreset
    tape = nodes.u.tape
    m = coreset.size
    mode = coreset.weight_mode
    if mode == FIXED_RATIO:
        return tape.constant(np.full(m, coreset.n / m) if m else np.zeros(0))
    if mode == UNIT:
        return tape.constant(np.ones(m))
    if mode == FREE_NONNEG:
        return nodes.v_raw
    weights = ops.mul(float(coreset.n), ops.softmax(nodes.beta, axis=-1))
    if mode == SOFTMAX_ALPHA:
        weights = ops.mul(nodes.alpha, weights)
    return weights


def label_distribution(nodes: CoresetNodes) -> Node:
    """(M, C) label probabilities for soft labels."""
    return ops.softmax(nodes.z, axis=-1)


def coreset_logliks(model: Model, nodes: CoresetNodes, theta: Node) -> Node:
    """Unweighted per-point log-likelihoods (K, M); soft labels use the cross-entropy form."""
    coreset = nodes.coreset
    if coreset.soft_labels:
        return model.soft_log_likelihood(theta, nodes.u, label_distribution(nodes))
    return model.log_likelihood(theta, nodes.u, coreset.z)


def weighted_coreset_loglik(model: Model, nodes: CoresetNodes, theta: Node, weights: Optional[Node] = None) -> Node:
    """sum_i v_i log p(z_i | u_i, theta_k) for each sample, shape (K,)."""
    if nodes.coreset.size == 0:
        return ops.mul(ops.sum_(theta, axis=-1), 0.0)
    weights = materialize_weights(nodes) if weights is None else weights
    return ops.sum_(ops.mul(coreset_logliks(model, nodes, theta), weights), axis=-1)


def _allocate(m: int, capacity: np.ndarray) -> np.ndarray:
    """Split m slots as evenly as capacities allow, lower class indices first on remainders."""
    counts = np.zeros(capacity.size, dtype=np.int64)
    remaining = m
    while remaining > 0:
        open_classes = np.flatnonzero(counts < capacity)
        share, extra = divmod(remaining, open_classes.size)
        for rank, c in enumerate(open_classes):
            take = min(share + (1 if rank < extra else 0), capacity[c] - counts[c])
            counts[c] += take
            remaining -= take
    return counts


def init_coreset(strategy: str, dataset: Dataset, m: int, rng: np.random.Generator,
                 weight_mode: str = SOFTMAX, soft_labels: bool = False, learn_locations: bool = True,
                 classes: Optional[Sequence[int]] = None, n: Optional[int] = None,
                 seed: Optional[int] = None) -> Coreset:
    """
    Build an initial coreset.

    Args:
        strategy: "subset" draws a class-stratified subset without replacement
            and copies its labels; "gaussian" draws each point around its
            class mean with the per-feature empirical std, assigning labels
            round-robin over the classes.
        dataset: training data.
        m: coreset size.
        rng: the "init" stream.
        classes: classes to cover; defaults to all classes of the dataset.
        n: total evidence N; defaults to the dataset size.
    """
    if strategy not in INIT_STRATEGIES:
        raise ConfigurationError(f"Unknown init strategy '{strategy}'")
    dataset.require_nonempty()
    classes = list(range(dataset.num_classes)) if classes is None else [int(c) for c in classes]
    counts = dataset.class_counts()
    empty = [c for c in classes if counts[c] == 0]
    if empty:
        raise DatasetError(f"Classes {empty} have no examples in {dataset.name}")
    if m < 1:
        raise ConfigurationError("coreset size must be positive")

    if strategy == "subset":
        members = [np.flatnonzero(dataset.y == c) for c in classes]
        pool = sum(len(member) for member in members)
        if m > pool:
            raise ConfigurationError(f"coreset size {m} exceeds the {pool} available points")
        quota = _allocate(m, np.array([len(member) for member in members]))
        chosen = np.sort(np.concatenate([rng.choice(member, size=q, replace=False)
                                         for member, q in zip(members, quota)]))
        u = dataset.X[chosen]
        labels = dataset.y[chosen]
        source = chosen
    else:
        scale = dataset.X.std(axis=0)
        labels = np.array([classes[i % len(classes)] for i in range(m)], dtype=np.int64)
        u = np.empty((m, dataset.d))
        for c in classes:
            rows = labels == c
            centre = dataset.X[dataset.y == c].mean(axis=0)
            u[rows] = centre + scale * rng.standard_normal((int(rows.sum()), dataset.d))
        source = None

    if soft_labels:
        z = SOFT_LABEL_INIT_LOGIT * np.eye(dataset.num_classes)[labels]
    else:
        z = labels
    total = dataset.n if n is None else n
    coreset = Coreset(
        u=u, z=z, num_classes=dataset.num_classes, n=total, weight_mode=weight_mode,
        v_raw=np.full(m, total / m), soft_labels=soft_labels,
        trainable=trainable_groups(weight_mode, learn_locations, soft_labels),
        source_indices=source, seed=seed,
    )
    logger.debug(f"Initialised {strategy} coreset of {m} points over classes {classes}")
    return coreset


def empty_coreset(dataset: Dataset, weight_mode: str = FREE_NONNEG) -> Coreset:
    """A zero-point coreset over the dataset's feature space."""
    return Coreset(u=np.zeros((0, dataset.d)), z=np.zeros(0, dtype=np.int64), num_classes=dataset.num_classes,
                   n=dataset.n, weight_mode=weight_mode, source_indices=np.zeros(0, dtype=np.int64),
                   trainable=trainable_groups(weight_mode, learn_locations=False))
