"""
Probabilistic classification models as graph builders.

Every builder takes a batch of parameter vectors `theta` of shape (K, P) and
inputs `X` of shape (N, D), either of which may be a tape node, and returns
nodes with a leading sample axis: per-point log-likelihoods are (K, N) and
class log-probabilities are (K, N, C).
"""
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional, Tuple, Union
import numpy as np
from .autodiff import ops
from .autodiff.tape import Node, Tape
from .exceptions import ConfigurationError, InvalidLabelError, NonFiniteError, ShapeError

LOGISTIC_REGRESSION = "logistic-regression"
FEEDFORWARD_BNN = "feedforward-bnn"
MODEL_KINDS = (LOGISTIC_REGRESSION, FEEDFORWARD_BNN)

Tensor = Union[Node, np.ndarray]


@dataclass(frozen=True)
class ModelSpec:
    kind: str = LOGISTIC_REGRESSION
    input_dim: int = 2
    num_classes: int = 2
    hidden_widths: Tuple[int, ...] = ()
    activation: str = "tanh"
    prior_std: float = 1.0
    layer_prior_stds: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.layer_prior_stds is not None:
            object.__setattr__(self, "layer_prior_stds", tuple(float(s) for s in self.layer_prior_stds))
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"Unknown model kind '{self.kind}'")
        if self.input_dim < 1:
            raise ConfigurationError("model.input_dim must be positive")
        if self.prior_std <= 0:
            raise ConfigurationError("model.prior_std must be positive")
        if self.kind == LOGISTIC_REGRESSION:
            if self.num_classes != 2:
                raise ConfigurationError("logistic regression is binary (num_classes = 2)")
            if self.hidden_widths:
                raise ConfigurationError("logistic regression has no hidden layers")
        else:
            if not self.hidden_widths or min(self.hidden_widths) < 1:
                raise ConfigurationError("a BNN needs at least one positive hidden width")
            if self.num_classes < 2:
                raise ConfigurationError("a BNN needs at least two classes")
            if self.activation not in ops.ACTIVATIONS:
                raise ConfigurationError(f"Unknown activation '{self.activation}'")
            if self.layer_prior_stds is not None and len(self.layer_prior_stds) != len(self.hidden_widths) + 1:
                raise ConfigurationError("layer_prior_stds needs one entry per layer")

    def layer_sizes(self) -> List[Tuple[int, int]]:
        widths = (self.input_dim,) + self.hidden_widths + (self.num_classes,)
        return list(zip(widths[:-1], widths[1:]))

    def shape_map(self) -> List[Tuple[str, tuple]]:
        """Named parameter blocks in storage order."""
        if self.kind == LOGISTIC_REGRESSION:
            return [("weights", (self.input_dim,)), ("bias", (1,))]
        blocks = []
        last = len(self.hidden_widths)
        for i, (fan_in, fan_out) in enumerate(self.layer_sizes()):
            prefix = "output" if i == last else f"hidden{i}"
            blocks.append((f"{prefix}.weights", (fan_in, fan_out)))
            blocks.append((f"{prefix}.bias", (fan_out,)))
        return blocks

    @property
    def parameter_count(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.shape_map())

    def prior_stds(self) -> np.ndarray:
        """Per-parameter prior standard deviations."""
        if self.kind == LOGISTIC_REGRESSION or self.layer_prior_stds is None:
            return np.full(self.parameter_count, float(self.prior_std))
        parts = []
        for (fan_in, fan_out), std in zip(self.layer_sizes(), self.layer_prior_stds):
            parts.append(np.full(fan_in * fan_out + fan_out, std))
        return np.concatenate(parts)

    def with_classes(self, num_classes: int) -> "ModelSpec":
        """Same network with a wider (or narrower) output layer."""
        return ModelSpec(self.kind, self.input_dim, num_classes, self.hidden_widths, self.activation,
                         self.prior_std, self.layer_prior_stds)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["hidden_widths"] = list(self.hidden_widths)
        if self.layer_prior_stds is not None:
            data["layer_prior_stds"] = list(self.layer_prior_stds)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSpec":
        data = dict(data)
        data["hidden_widths"] = tuple(data.get("hidden_widths", ()))
        if data.get("layer_prior_stds") is not None:
            data["layer_prior_stds"] = tuple(data["layer_prior_stds"])
        return cls(**data)


@dataclass(frozen=True)
class ParameterVector:
    """A flat parameter vector with named views into it."""
    values: np.ndarray
    spec: ModelSpec

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.spec.parameter_count,):
            raise ShapeError(f"Expected {self.spec.parameter_count} parameters, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise NonFiniteError("Parameter vector has non-finite entries")
        object.__setattr__(self, "values", values)

    def slices(self) -> Dict[str, Tuple[slice, tuple]]:
        out, offset = {}, 0
        for name, shape in self.spec.shape_map():
            size = int(np.prod(shape))
            out[name] = (slice(offset, offset + size), shape)
            offset += size
        return out

    def get(self, name: str) -> np.ndarray:
        index, shape = self.slices()[name]
        return self.values[index].reshape(shape)

    @classmethod
    def zeros(cls, spec: ModelSpec) -> "ParameterVector":
        return cls(np.zeros(spec.parameter_count), spec)

    @classmethod
    def from_blocks(cls, spec: ModelSpec, blocks: Dict[str, np.ndarray]) -> "ParameterVector":
        return cls(np.concatenate([np.asarray(blocks[name], dtype=np.float64).reshape(-1)
                                   for name, _ in spec.shape_map()]), spec)


def _lift(tape: Tape, value: Tensor) -> Node:
    return tape.lift(value) if isinstance(value, Node) else tape.constant(value)


def _transpose(X: Tensor, tape: Tape) -> Node:
    if isinstance(X, Node):
        return ops.swap_last(X)
    return tape.constant(np.ascontiguousarray(np.asarray(X, dtype=np.float64).T))


def _tape_of(*values) -> Tape:
    for value in values:
        if isinstance(value, Node):
            return value.tape
    raise TypeError("At least one argument must be a tape node")


class Model(ABC):

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self._prior_stds = spec.prior_stds()

    @property
    def parameter_count(self) -> int:
        return self.spec.parameter_count

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def prior_stds(self) -> np.ndarray:
        return self._prior_stds

    def check_theta(self, theta: Node) -> None:
        if theta.ndim != 2 or theta.shape[1] != self.parameter_count:
            raise ShapeError(f"theta must have shape (K, {self.parameter_count}), got {theta.shape}")

    def check_labels(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.int64)
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise InvalidLabelError(f"class indices must lie in [0, {self.num_classes})")
        return y

    def log_prior(self, theta: Node) -> Node:
        """log N(theta; 0, diag(prior_std^2)) with its normalizer, one value per row."""
        self.check_theta(theta)
        stds = self._prior_stds
        constant = -0.5 * self.parameter_count * math.log(2.0 * math.pi) - float(np.sum(np.log(stds)))
        scaled = ops.div(theta, theta.tape.constant(stds))
        return ops.add(ops.mul(-0.5, ops.sum_(ops.square(scaled), axis=-1)), constant)

    @abstractmethod
    def log_probs(self, theta: Node, X: Tensor) -> Node:
        """Class log-probabilities, shape (K, N, C)."""
        pass

    def log_likelihood(self, theta: Node, X: Tensor, y: np.ndarray) -> Node:
        """Hard-label log-likelihoods, shape (K, N)."""
        y = self.check_labels(y)
        onehot = np.eye(self.num_classes)[y]
        log_probs = self.log_probs(theta, X)
        return ops.sum_(ops.mul(log_probs, log_probs.tape.constant(onehot)), axis=-1)

    def soft_log_likelihood(self, theta: Node, X: Tensor, label_probs: Tensor) -> Node:
        """Expected log-likelihood under per-point label distributions, shape (K, N)."""
        log_probs = self.log_probs(theta, X)
        return ops.sum_(ops.mul(log_probs, label_probs), axis=-1)

    def predict_proba(self, thetas: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Numeric class probabilities (K, N, C) without recording a graph."""
        tape = Tape()
        with tape.no_record():
            out = self.log_probs(tape.constant(np.atleast_2d(thetas)), np.asarray(X, dtype=np.float64))
        return np.exp(out.value)

    def loglik_matrix(self, thetas: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Numeric hard-label log-likelihoods (K, N) without recording a graph."""
        tape = Tape()
        with tape.no_record():
            out = self.log_likelihood(tape.constant(np.atleast_2d(thetas)), np.asarray(X, dtype=np.float64), y)
        return np.array(out.value)


class LogisticRegression(Model):
    """Binary logistic regression with a single logit w^T x + b."""

    def logits(self, theta: Node, X: Tensor) -> Node:
        self.check_theta(theta)
        d = self.spec.input_dim
        weights = theta[:, :d]
        bias = theta[:, d:d + 1]
        return ops.add(ops.matmul(weights, _transpose(X, theta.tape)), bias)

    def log_probs(self, theta: Node, X: Tensor) -> Node:
        logits = self.logits(theta, X)
        return ops.stack([ops.log_sigmoid(ops.negate(logits)), ops.log_sigmoid(logits)], axis=-1)

    def log_likelihood(self, theta: Node, X: Tensor, y: np.ndarray) -> Node:
        y = self.check_labels(y)
        signs = theta.tape.constant(2.0 * y - 1.0)
        return ops.log_sigmoid(ops.mul(self.logits(theta, X), signs))


class FeedforwardBNN(Model):
    """Fully connected network with a softmax output over C classes."""

    def log_probs(self, theta: Node, X: Tensor) -> Node:
        self.check_theta(theta)
        k = theta.shape[0]
        activation = ops.ACTIVATIONS[self.spec.activation]
        sizes = self.spec.layer_sizes()
        hidden = X if isinstance(X, Node) else theta.tape.constant(np.asarray(X, dtype=np.float64))
        offset = 0
        for i, (fan_in, fan_out) in enumerate(sizes):
            weights = ops.reshape(theta[:, offset:offset + fan_in * fan_out], (k, fan_in, fan_out))
            offset += fan_in * fan_out
            bias = ops.reshape(theta[:, offset:offset + fan_out], (k, 1, fan_out))
            offset += fan_out
            hidden = ops.add(ops.matmul(hidden, weights), bias)
            if i < len(sizes) - 1:
                hidden = activation(hidden)
        return ops.log_softmax(hidden, axis=-1)


def build_model(spec: ModelSpec) -> Model:
    if spec.kind == LOGISTIC_REGRESSION:
        return LogisticRegression(spec)
    return FeedforwardBNN(spec)


def _as_batch(model: Model, theta: Tensor) -> Node:
    if not isinstance(theta, Node):
        raise TypeError("theta must be a tape node")
    if theta.ndim != 1 or theta.shape[0] != model.parameter_count:
        raise ShapeError(f"Expected a parameter vector of length {model.parameter_count}, got shape {theta.shape}")
    return ops.reshape(theta, (1, model.parameter_count))


def log_prior(model: Model, theta: Node) -> Node:
    """Scalar log-prior of one parameter vector."""
    return ops.reshape(model.log_prior(_as_batch(model, theta)), ())


def log_likelihood_point(model: Model, theta: Node, x: Tensor, y: int) -> Node:
    """Scalar log p(y | x, theta) for one input."""
    batch = _as_batch(model, theta)
    x_row = ops.reshape(x, (1, -1)) if isinstance(x, Node) else np.asarray(x, dtype=np.float64).reshape(1, -1)
    if x_row.shape[1] != model.spec.input_dim:
        raise ShapeError(f"x must have {model.spec.input_dim} entries, got {x_row.shape[1]}")
    return ops.reshape(model.log_likelihood(batch, x_row, np.array([y])), ())


def predict_prob(model: Model, theta: Node, x: Tensor) -> Node:
    """Class-probability vector of length C for one input."""
    batch = _as_batch(model, theta)
    x_row = ops.reshape(x, (1, -1)) if isinstance(x, Node) else np.asarray(x, dtype=np.float64).reshape(1, -1)
    return ops.reshape(ops.exp(model.log_probs(batch, x_row)), (model.num_classes,))
