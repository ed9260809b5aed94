"""
Variational objectives and the self-normalized importance-sampling correction.

All objectives share one batch of reparameterized samples theta (K, P) drawn
from r(theta; psi). The importance log-weights of the coreset posterior
against r are

    exact:  log w_k = sum_i v_i log p(z_i | u_i, theta_k) + log p(theta_k) - log r(theta_k)
    kl:     log w_k = sum_i v_i log p(z_i | u_i, theta_k) - KL(r || p)

and w~ = softmax(log w). Gradients flow through the normalization.
"""
from dataclasses import dataclass
from typing import Optional, Tuple
import numpy as np
from .autodiff import ops
from .autodiff.tape import Node
from .coreset import CoresetNodes, coreset_logliks, label_distribution, weighted_coreset_loglik
from .exceptions import ConfigurationError, DegenerateWeightsError
from .models import Model
from .variational import kl_to_prior, log_density

WEIGHT_FORMS = ("exact", "kl")


@dataclass
class WeightedSampleBatch:
    theta: Node
    log_w: Node
    w: Node
    noise: Optional[np.ndarray] = None

    @property
    def k(self) -> int:
        return self.theta.shape[0]

    def weights(self) -> np.ndarray:
        return np.array(self.w.value)

    def ess(self) -> float:
        return normalized_ess(self.w.value)


def normalize_log_weights(log_w: Node) -> Node:
    if not np.any(np.isfinite(log_w.value)):
        raise DegenerateWeightsError("every importance log-weight is non-finite")
    return ops.softmax(log_w, axis=-1)


def normalized_ess(w: np.ndarray) -> float:
    """Kong's effective sample size divided by K, in (0, 1]."""
    w = np.asarray(w, dtype=np.float64)
    return float(1.0 / (w.size * np.sum(w * w)))


def _log_weight_correction(model: Model, means: Node, log_stds: Node, theta: Node, weight_form: str) -> Node:
    if weight_form == "exact":
        return ops.sub(model.log_prior(theta), log_density(means, log_stds, theta))
    if weight_form == "kl":
        return ops.negate(kl_to_prior(means, log_stds, model.prior_stds))
    raise ConfigurationError(f"Unknown weight form '{weight_form}'")


def importance_weights(model: Model, nodes: CoresetNodes, means: Node, log_stds: Node, theta: Node,
                       weight_form: str = "exact", noise: Optional[np.ndarray] = None,
                       coreset_ll: Optional[Node] = None) -> WeightedSampleBatch:
    """Self-normalized weights of the coreset posterior relative to r(theta; psi)."""
    if coreset_ll is None:
        coreset_ll = weighted_coreset_loglik(model, nodes, theta)
    log_w = ops.add(coreset_ll, _log_weight_correction(model, means, log_stds, theta, weight_form))
    return WeightedSampleBatch(theta=theta, log_w=log_w, w=normalize_log_weights(log_w), noise=noise)


def uniform_batch(theta: Node, noise: Optional[np.ndarray] = None) -> WeightedSampleBatch:
    k = theta.shape[0]
    zeros = theta.tape.constant(np.zeros(k))
    return WeightedSampleBatch(theta=theta, log_w=zeros, w=theta.tape.constant(np.full(k, 1.0 / k)), noise=noise)


def data_loglik(model: Model, theta: Node, X: Optional[np.ndarray], y: Optional[np.ndarray], scale: float) -> Node:
    """scale * sum_n log p(y_n | x_n, theta_k), shape (K,)."""
    if X is None or len(X) == 0:
        return ops.mul(ops.sum_(theta, axis=-1), 0.0)
    return ops.mul(float(scale), ops.sum_(model.log_likelihood(theta, X, y), axis=-1))


def mc_kl(model: Model, means: Node, log_stds: Node, theta: Node) -> Node:
    """Per-sample log r(theta_k) - log p(theta_k), shape (K,)."""
    return ops.sub(log_density(means, log_stds, theta), model.log_prior(theta))


def elbo_classical(model: Model, means: Node, log_stds: Node, theta: Node, X: Optional[np.ndarray],
                   y: Optional[np.ndarray], scale: float = 1.0, kl: str = "analytic",
                   coreset: Optional[CoresetNodes] = None) -> Node:
    """
    Classical ELBO: mean_k [scale * sum log p(y | x, theta_k)] - KL(r || p).

    With `coreset` given, the weighted coreset log-likelihood takes the place
    of the data term.
    """
    if coreset is not None:
        likelihood = ops.mean(weighted_coreset_loglik(model, coreset, theta))
    else:
        likelihood = ops.mean(data_loglik(model, theta, X, y, scale))
    if kl == "analytic":
        return ops.sub(likelihood, kl_to_prior(means, log_stds, model.prior_stds))
    if kl == "mc":
        return ops.sub(likelihood, ops.mean(mc_kl(model, means, log_stds, theta)))
    raise ConfigurationError(f"Unknown KL estimator '{kl}'")


def elbo_ip(model: Model, nodes: CoresetNodes, means: Node, log_stds: Node, theta: Node,
            coreset_ll: Optional[Node] = None) -> Node:
    """Lower bound on log p(z | u): mean_k [weighted coreset loglik + log p - log r]."""
    if coreset_ll is None:
        coreset_ll = weighted_coreset_loglik(model, nodes, theta)
    return ops.mean(ops.sub(coreset_ll, mc_kl(model, means, log_stds, theta)))


def elbo_psvi_is_bb(model: Model, nodes: CoresetNodes, means: Node, log_stds: Node, theta: Node,
                    X: Optional[np.ndarray], y: Optional[np.ndarray], scale: float,
                    weight_form: str = "exact", uniform_weights: bool = False,
                    noise: Optional[np.ndarray] = None) -> Tuple[Node, WeightedSampleBatch]:
    """
    Black-box coreset objective on a data minibatch.

        sum_k w~_k [scale * sum log p(y | x, theta_k) - c_k] + mean_k [c_k + log p(theta_k) - log r(theta_k)]

    where c_k is the weighted coreset log-likelihood. Both terms use the same
    samples. With uniform weights (or K = 1) the coreset terms cancel and the
    value is the classical ELBO with a Monte Carlo KL.

    Returns:
        (objective node, the weighted sample batch it used)
    """
    coreset_ll = weighted_coreset_loglik(model, nodes, theta)
    if uniform_weights:
        batch = uniform_batch(theta, noise)
    else:
        batch = importance_weights(model, nodes, means, log_stds, theta, weight_form, noise, coreset_ll)
    residual = ops.sub(data_loglik(model, theta, X, y, scale), coreset_ll)
    corrected = ops.sum_(ops.mul(batch.w, residual))
    return ops.add(corrected, elbo_ip(model, nodes, means, log_stds, theta, coreset_ll)), batch


def elbo_sparse_bbvi(model: Model, nodes: CoresetNodes, means: Node, log_stds: Node, theta: Node,
                     X: Optional[np.ndarray], y: Optional[np.ndarray], scale: float,
                     weight_form: str = "exact", noise: Optional[np.ndarray] = None) -> Tuple[Node, WeightedSampleBatch]:
    """The black-box objective for coresets of real datapoints: only weights (and psi) are trainable."""
    if nodes.u.name is not None or (nodes.z is not None and nodes.z.name is not None):
        raise ConfigurationError("sparse coresets keep their locations and labels fixed")
    return elbo_psvi_is_bb(model, nodes, means, log_stds, theta, X, y, scale, weight_form, noise=noise)


def soft_label_kl(model: Model, nodes: CoresetNodes, theta: Node, w: Node) -> Node:
    """
    Per-point KL bound of soft labels, shape (M,):
    sum_k w~_k sum_c p(c | z_m) [log p(c | z_m) - log p(c | u_m, theta_k)].
    """
    if not nodes.coreset.soft_labels:
        raise ConfigurationError("soft-label terms need a coreset with soft labels")
    label_probs = label_distribution(nodes)
    negative_entropy = ops.sum_(ops.mul(label_probs, ops.log_softmax(nodes.z, axis=-1)), axis=-1)
    cross = coreset_logliks(model, nodes, theta)
    expected_cross = ops.sum_(ops.mul(ops.reshape(w, (w.shape[0], 1)), cross), axis=0)
    return ops.sub(negative_entropy, expected_cross)


def soft_label_term(model: Model, nodes: CoresetNodes, theta: Node, w: Node, m: int) -> Node:
    """The KL bound for coreset point m, a scalar node."""
    return ops.getitem(soft_label_kl(model, nodes, theta, w), m)
