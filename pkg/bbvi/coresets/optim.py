"""
Adam and the bilevel coreset driver.

One outer iteration of the driver:

1. run T Adam steps on the inner loss -ELBO_IP(coreset, psi), recorded on the
   tape so the trajectory psi_T(phi) stays differentiable in the coreset
   parameters phi;
2. evaluate the outer loss -ELBO_PSVI-IS-BB(phi, psi_T) on a data minibatch;
3. sweep the tape once for dL/dphi, including every path through the inner
   steps;
4. apply one plain Adam step to phi and keep psi_T for the next iteration.
"""
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Optional, Tuple, Union
import numpy as np
from .autodiff import ops
from .autodiff.tape import Node, Tape
from .autodiff.unroll import unrolled_gradient
from .coreset import Coreset, CoresetNodes
from .exceptions import ConfigurationError, NonFiniteLossError
from .models import Model
from .objectives import WEIGHT_FORMS, elbo_ip, elbo_psvi_is_bb, elbo_sparse_bbvi
from .rng import RandomStreams
from .variational import VariationalGaussian, sample


logger = logging.getLogger(__name__)

Tensor = Union[Node, np.ndarray]

OUTER_GROUPS = ("u", "z", "beta", "v", "alpha", "psi")


@dataclass(frozen=True)
class AdamState:
    m: Tensor
    v: Tensor
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, shape, lr: float = 1e-3, **hyper) -> "AdamState":
        return cls(m=np.zeros(shape), v=np.zeros(shape), lr=lr, **hyper)

    def numpy(self) -> "AdamState":
        """Detach node-valued moments into plain arrays."""
        m = self.m.value if isinstance(self.m, Node) else self.m
        v = self.v.value if isinstance(self.v, Node) else self.v
        return replace(self, m=np.array(m), v=np.array(v))


def adam_step(state: AdamState, params: Tensor, grad: Tensor, differentiable: bool = False) -> Tuple[AdamState, Tensor]:
    """
    One bias-corrected Adam update, params - lr * m_hat / (sqrt(v_hat) + eps).

    With `differentiable=True` the update is built from tape primitives, so
    params, grad and the moments may be nodes and the result can be swept.
    """
    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step
    if differentiable:
        tape = params.tape if isinstance(params, Node) else grad.tape
        m_prev = state.m if isinstance(state.m, Node) else tape.constant(state.m)
        v_prev = state.v if isinstance(state.v, Node) else tape.constant(state.v)
        m = ops.add(ops.mul(state.beta1, m_prev), ops.mul(1.0 - state.beta1, grad))
        v = ops.add(ops.mul(state.beta2, v_prev), ops.mul(1.0 - state.beta2, ops.square(grad)))
        denom = ops.add(ops.sqrt(ops.div(v, correction2)), state.eps)
        update = ops.div(ops.mul(state.lr / correction1, m), denom)
        return replace(state, m=m, v=v, step=step), ops.sub(params, update)

    grad = np.asarray(grad, dtype=np.float64)
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    update = (state.lr / correction1) * m / (np.sqrt(v / correction2) + state.eps)
    return replace(state, m=m, v=v, step=step), np.asarray(params, dtype=np.float64) - update


class Adam:
    """Plain Adam over named parameter groups, each with its own learning rate."""

    def __init__(self, lrs: Dict[str, float]):
        self.lrs = dict(lrs)
        self.states: Dict[str, AdamState] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
        updated = {}
        for name, grad in grads.items():
            lr = self.lrs.get(name, 0.0)
            if lr == 0.0:
                updated[name] = np.array(params[name])
                continue
            state = self.states.get(name) or AdamState.zeros(np.shape(params[name]), lr)
            self.states[name], updated[name] = adam_step(state, params[name], grad)
        return updated

    def reset(self) -> None:
        self.states.clear()


@dataclass(frozen=True)
class BilevelConfig:
    """
    Settings of the nested optimization.

    Attributes:
        inner_steps: T, Adam steps on the inner loss per outer iteration.
        inner_lr: learning rate of the inner Adam on psi.
        outer_lrs: learning rate per outer group ("u", "z", "beta", "v", "alpha", "psi").
        outer_iterations: number of outer updates.
        batch_size: B, data minibatch size for the outer loss.
        mc_samples: K, samples per objective evaluation.
        warm_start: carry psi_T over to the next outer iteration.
        reset_inner_state: fresh inner Adam moments every outer iteration.
        init_std: initial std of r(theta; psi).
        weight_form: "exact" per-sample importance weights or "kl" substitution.
        joint: optimize psi with the outer objective directly, with no inner loop.
        seed: run seed.
    """
    inner_steps: int = 50
    inner_lr: float = 1e-3
    outer_lrs: Dict[str, float] = field(default_factory=lambda: {
        "u": 1e-3, "z": 1e-3, "beta": 1e-3, "v": 1e-3, "alpha": 1e-3, "psi": 1e-3,
    })
    outer_iterations: int = 100
    batch_size: int = 256
    mc_samples: int = 10
    warm_start: bool = True
    reset_inner_state: bool = True
    init_std: float = 1e-3
    weight_form: str = "exact"
    joint: bool = False
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "outer_lrs", {**{g: 1e-3 for g in OUTER_GROUPS}, **dict(self.outer_lrs)})
        unknown = set(self.outer_lrs) - set(OUTER_GROUPS)
        if unknown:
            raise ConfigurationError(f"Unknown outer learning-rate groups: {sorted(unknown)}")
        if self.inner_steps < 1 and not self.joint:
            raise ConfigurationError("bilevel.inner_steps must be at least 1")
        if self.batch_size < 1:
            raise ConfigurationError("bilevel.batch_size must be positive")
        if self.mc_samples < 1:
            raise ConfigurationError("bilevel.mc_samples must be positive")
        if self.outer_iterations < 0:
            raise ConfigurationError("bilevel.outer_iterations must be non-negative")
        if self.init_std <= 0:
            raise ConfigurationError("bilevel.init_std must be positive")
        if self.weight_form not in WEIGHT_FORMS:
            raise ConfigurationError(f"Unknown weight form '{self.weight_form}'")

    def validate_for(self, n: int) -> None:
        if self.batch_size > n:
            raise ConfigurationError(f"bilevel.batch_size {self.batch_size} exceeds the {n} training points")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BilevelConfig":
        return cls(**data)


@dataclass
class BilevelDiagnostics:
    iteration: int
    outer_loss: float
    inner_initial_loss: float
    inner_final_loss: float
    ess: float
    grad_norms: Dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Hypergradient:
    loss: float
    grads: Dict[str, np.ndarray]
    psi: VariationalGaussian
    diagnostics: BilevelDiagnostics


class BilevelOptimizer:
    """
    Drives the outer optimization of a coreset.

    The coreset is updated in place; `psi` holds the latest inner solution.
    Inner noise comes from the "noise" stream and outer noise from the
    "outer" stream, so the outer samples do not depend on T.
    """

    def __init__(self, model: Model, coreset: Coreset, config: BilevelConfig, streams: RandomStreams,
                 psi: Optional[VariationalGaussian] = None):
        self.model = model
        self.coreset = coreset
        self.config = config
        self.streams = streams
        self.psi = psi or self.initial_psi()
        lrs = {group: config.outer_lrs[group] for group in OUTER_GROUPS}
        lrs["psi.means"] = lrs["psi.log_stds"] = config.outer_lrs["psi"]
        self.outer = Adam(lrs)
        self.inner_state: Optional[Tuple[AdamState, AdamState]] = None
        self.iteration = 0
        self._logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def initial_psi(self) -> VariationalGaussian:
        return VariationalGaussian.initial(self.model.parameter_count, self.config.init_std)

    def reset(self, psi: Optional[VariationalGaussian] = None) -> None:
        """Reinitialize psi and every optimizer state."""
        self.psi = psi or self.initial_psi()
        self.outer.reset()
        self.inner_state = None

    def _inner_states(self) -> Tuple[AdamState, AdamState]:
        if self.inner_state is not None and not self.config.reset_inner_state:
            return self.inner_state
        p = self.model.parameter_count
        return AdamState.zeros(p, self.config.inner_lr), AdamState.zeros(p, self.config.inner_lr)

    def hypergradient(self, X: Optional[np.ndarray], y: Optional[np.ndarray], scale: float) -> Hypergradient:
        """Outer loss and its gradients with respect to every trainable coreset group (and psi in joint mode)."""
        config = self.config
        model = self.model
        k, p = config.mc_samples, model.parameter_count
        tape = Tape()
        nodes: CoresetNodes = self.coreset.to_nodes(tape)
        start = self.psi if config.warm_start else self.initial_psi()
        # psi0 must be a tape variable for the inner sweeps; it is an outer leaf only in joint mode
        means, log_stds = start.to_nodes(tape)
        leaves = nodes.variables()
        # coresets of real datapoints: only weights move
        objective = elbo_psvi_is_bb if {"u", "z"} & set(leaves) else elbo_sparse_bbvi
        if config.joint:
            leaves = {**leaves, "psi.means": means, "psi.log_stds": log_stds}
        if not leaves:
            raise ConfigurationError("nothing to optimize: no trainable coreset group")

        inner_losses = []

        def inner_step(carry, t):
            mu, log_sigma, mu_state, sigma_state = carry
            theta = sample(mu, log_sigma, self.streams.normal((k, p), "noise"))
            loss = ops.negate(elbo_ip(model, nodes, mu, log_sigma, theta))
            inner_losses.append(loss.item())
            g_mu, g_sigma = tape.grad(loss, [mu, log_sigma], create_graph=True)
            mu_state, mu = adam_step(mu_state, mu, g_mu, differentiable=True)
            sigma_state, log_sigma = adam_step(sigma_state, log_sigma, g_sigma, differentiable=True)
            return mu, log_sigma, mu_state, sigma_state

        batches = []

        def outer_loss(carry):
            mu, log_sigma = carry[0], carry[1]
            noise = self.streams.normal((k, p), "outer")
            theta = sample(mu, log_sigma, noise)
            value, batch = objective(model, nodes, mu, log_sigma, theta, X, y, scale, config.weight_form,
                                     noise=noise)
            batches.append(batch)
            return ops.negate(value)

        steps = 0 if config.joint else config.inner_steps
        carry = (means, log_stds) + self._inner_states()
        loss, carry, grads = unrolled_gradient(inner_step, carry, steps, outer_loss, list(leaves.values()))

        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteLossError("outer loss is not finite", self.iteration)
        named = {name: np.array(g.value) for name, g in zip(leaves, grads)}
        for name, g in named.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteLossError(f"gradient of '{name}' is not finite", self.iteration)

        mu, log_sigma, mu_state, sigma_state = carry
        self.inner_state = (mu_state.numpy(), sigma_state.numpy())
        psi = VariationalGaussian(np.array(mu.value), np.array(log_sigma.value))
        diagnostics = BilevelDiagnostics(
            iteration=self.iteration,
            outer_loss=value,
            inner_initial_loss=inner_losses[0] if inner_losses else value,
            inner_final_loss=inner_losses[-1] if inner_losses else value,
            ess=batches[-1].ess(),
            grad_norms={name: float(np.linalg.norm(g)) for name, g in named.items()},
        )
        return Hypergradient(loss=value, grads=named, psi=psi, diagnostics=diagnostics)

    def step(self, X: Optional[np.ndarray], y: Optional[np.ndarray], scale: float) -> BilevelDiagnostics:
        """One outer iteration; returns its diagnostics."""
        result = self.hypergradient(X, y, scale)
        coreset_grads = {name: g for name, g in result.grads.items() if not name.startswith("psi.")}
        if coreset_grads:
            updated = self.outer.step(self.coreset.group_values(), coreset_grads)
            self.coreset.update(updated)
        psi = result.psi
        if self.config.joint:
            moved = self.outer.step({"psi.means": psi.means, "psi.log_stds": psi.log_stds},
                                    {"psi.means": result.grads["psi.means"], "psi.log_stds": result.grads["psi.log_stds"]})
            psi = VariationalGaussian(moved["psi.means"], moved["psi.log_stds"])
        self.psi = psi
        self._logger.debug(
            f"outer {self.iteration}: loss={result.loss:.4f} inner={result.diagnostics.inner_final_loss:.4f} "
            f"ess={result.diagnostics.ess:.3f}",
            extra={"iteration": self.iteration, "outer_loss": result.loss, "ess": result.diagnostics.ess},
        )
        self.iteration += 1
        return result.diagnostics


def bilevel_step(optimizer: BilevelOptimizer, X: Optional[np.ndarray], y: Optional[np.ndarray],
                 scale: float) -> Tuple[Coreset, VariationalGaussian, BilevelDiagnostics]:
    """Functional form: (updated coreset, psi*, diagnostics)."""
    diagnostics = optimizer.step(X, y, scale)
    return optimizer.coreset, optimizer.psi, diagnostics
