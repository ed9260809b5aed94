"""Mean-field Gaussian variational family r(theta; psi)."""
import math
from dataclasses import dataclass
from typing import Tuple, Union
import numpy as np
from .autodiff import ops
from .autodiff.tape import Node, Tape
from .exceptions import NonFiniteError, ShapeError

Tensor = Union[Node, np.ndarray]

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class VariationalGaussian:
    means: np.ndarray
    log_stds: np.ndarray

    def __post_init__(self):
        means = np.array(self.means, dtype=np.float64).reshape(-1)
        log_stds = np.array(self.log_stds, dtype=np.float64).reshape(-1)
        if means.shape != log_stds.shape:
            raise ShapeError(f"means {means.shape} and log_stds {log_stds.shape} differ")
        if not (np.all(np.isfinite(means)) and np.all(np.isfinite(log_stds))):
            raise NonFiniteError("variational parameters must be finite")
        means.setflags(write=False)
        log_stds.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "log_stds", log_stds)

    @property
    def dim(self) -> int:
        return self.means.shape[0]

    @property
    def stds(self) -> np.ndarray:
        return np.exp(self.log_stds)

    @classmethod
    def initial(cls, dim: int, init_std: float) -> "VariationalGaussian":
        """Means at zero and every std at init_std."""
        return cls(np.zeros(dim), np.full(dim, math.log(init_std)))

    @classmethod
    def from_prior(cls, prior_stds: np.ndarray) -> "VariationalGaussian":
        prior_stds = np.asarray(prior_stds, dtype=np.float64)
        return cls(np.zeros_like(prior_stds), np.log(prior_stds))

    def to_nodes(self, tape: Tape, prefix: str = "psi") -> Tuple[Node, Node]:
        return tape.variable(f"{prefix}.means", self.means), tape.variable(f"{prefix}.log_stds", self.log_stds)

    def draw(self, noise: np.ndarray) -> np.ndarray:
        """Numeric samples for a (K, P) block of standard-normal noise."""
        return self.means + self.stds * np.atleast_2d(noise)

    def kl_to_prior(self, prior_stds) -> float:
        return float(kl_divergence(self.means, self.log_stds, prior_stds))

    def to_dict(self) -> dict:
        return {"means": self.means.tolist(), "log_stds": self.log_stds.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "VariationalGaussian":
        return cls(np.array(data["means"]), np.array(data["log_stds"]))


def sample(means: Node, log_stds: Node, noise: np.ndarray) -> Node:
    """
    Reparameterized draws theta_k = means + exp(log_stds) * eps_k.

    Args:
        means, log_stds: nodes of shape (P,).
        noise: (K, P) standard-normal block supplied by the caller.

    Returns:
        A (K, P) node differentiable in both parameters.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim == 1:
        noise = noise.reshape(1, -1)
    if noise.ndim != 2 or noise.shape[1] != means.shape[0]:
        raise ShapeError(f"noise must have shape (K, {means.shape[0]}), got {noise.shape}")
    if noise.shape[0] < 1:
        raise ShapeError("at least one sample is needed")
    return ops.add(means, ops.mul(ops.exp(log_stds), means.tape.constant(noise)))


def log_density(means: Node, log_stds: Node, theta: Node) -> Node:
    """Diagonal-Gaussian log-density with its normalizer; (K,) for a (K, P) batch, scalar for (P,)."""
    if theta.shape[-1] != means.shape[0]:
        raise ShapeError(f"theta has {theta.shape[-1]} entries, expected {means.shape[0]}")
    z = ops.div(ops.sub(theta, means), ops.exp(log_stds))
    quadratic = ops.mul(-0.5, ops.sum_(ops.square(z), axis=-1))
    return ops.sub(ops.sub(quadratic, ops.sum_(log_stds)), 0.5 * means.shape[0] * LOG_2PI)


def kl_to_prior(means: Node, log_stds: Node, prior_stds) -> Node:
    """Closed-form KL(N(means, exp(log_stds)^2) || N(0, prior_stds^2)), a scalar node."""
    prior = np.broadcast_to(np.asarray(prior_stds, dtype=np.float64), means.shape)
    log_ratio = ops.sub(log_stds, means.tape.constant(np.log(prior)))
    mean_term = ops.div(ops.square(means), means.tape.constant(prior ** 2))
    total = ops.sub(ops.add(ops.exp(ops.mul(2.0, log_ratio)), mean_term), ops.add(1.0, ops.mul(2.0, log_ratio)))
    return ops.mul(0.5, ops.sum_(total))


def kl_divergence(means: np.ndarray, log_stds: np.ndarray, prior_stds) -> float:
    prior = np.broadcast_to(np.asarray(prior_stds, dtype=np.float64), np.shape(means))
    log_ratio = np.asarray(log_stds) - np.log(prior)
    return 0.5 * float(np.sum(np.exp(2.0 * log_ratio) + np.square(means) / prior ** 2 - 1.0 - 2.0 * log_ratio))
