"""Laplace-based baselines: the subset Laplace fit and the analytic-gradient Sparse VI."""
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple
import numpy as np
from ..autodiff import ops
from ..autodiff.tape import Node, Tape
from ..coreset import FIXED_RATIO, FREE_NONNEG, empty_coreset, init_coreset
from ..data.dataset import Dataset
from ..exceptions import DatasetError, NonFiniteLossError
from ..models import Model
from ..optim import Adam
from ..rng import RandomStreams
from ..variational import VariationalGaussian
from .base import MethodSettings, Monitor, TrainResult, minibatch_indices
from .greedy import greedy_stats, weight_gradient
from .sparse import coreset_loglik_matrix, grow, select_next


logger = logging.getLogger(__name__)

FD_STEP = 1e-5


@dataclass(frozen=True)
class LaplaceFit:
    """
    Attributes:
        psi: N(map, diag(1 / curvature)) as variational parameters.
        map: maximizer of the weighted log-joint.
        curvature: diagonal of the negative log-joint Hessian after flooring.
        clipped: number of entries raised to the curvature floor.
    """
    psi: VariationalGaussian
    map: np.ndarray
    curvature: np.ndarray
    clipped: int


def negative_log_joint(model: Model, theta: Node, X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                       scale: float = 1.0) -> Node:
    """-(log p(theta) + scale * sum_n w_n log p(y_n | x_n, theta)) per row of theta."""
    logliks = model.log_likelihood(theta, X, y)
    data = ops.sum_(ops.mul(logliks, theta.tape.constant(scale * np.asarray(weights, dtype=np.float64))), axis=-1)
    return ops.negate(ops.add(model.log_prior(theta), data))


def joint_value_and_grad(model: Model, thetas: np.ndarray, X: np.ndarray, y: np.ndarray, weights: np.ndarray,
                         scale: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Per-row negative log-joint (K,) and its gradient (K, P); rows are independent."""
    tape = Tape()
    theta = tape.variable("theta", np.atleast_2d(thetas))
    values = negative_log_joint(model, theta, X, y, weights, scale)
    grads = tape.gradient(ops.sum_(values), ["theta"])
    return np.array(values.value), grads["theta"]


def hessian_diagonal(model: Model, theta: np.ndarray, X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Central differences of exact gradients, all 2P shifted points evaluated as one batch."""
    p = theta.size
    steps = FD_STEP * (1.0 + np.abs(theta))
    shifted = np.vstack([theta + np.diag(steps), theta - np.diag(steps)])
    _, grads = joint_value_and_grad(model, shifted, X, y, weights)
    return (np.diag(grads[:p]) - np.diag(grads[p:])) / (2.0 * steps)


def fit_subset_laplace(model: Model, X: np.ndarray, y: np.ndarray, weights: np.ndarray, settings: MethodSettings,
                       streams: RandomStreams, theta0: Optional[np.ndarray] = None, steps: Optional[int] = None,
                       monitor: Optional[Monitor] = None, stage: str = "laplace") -> LaplaceFit:
    """
    Diagonal Laplace approximation of the weighted posterior.

    Adam finds the MAP on minibatches of the subset, one diagonal Newton step
    polishes it on the whole subset, and the curvature is floored at
    `settings.curvature_floor`.

    Args:
        X, y: the subset.
        weights: likelihood multiplicity of each subset point.
        theta0: MAP search start; zeros when omitted.
        steps: Adam iterations; `settings.laplace_steps` when omitted.
    """
    X = np.asarray(X, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise DatasetError("Laplace fit needs a nonempty subset")
    p = model.parameter_count
    theta = np.zeros(p) if theta0 is None else np.array(theta0, dtype=np.float64)
    steps = settings.laplace_steps if steps is None else steps
    optimizer = Adam({"theta": settings.laplace_lr})
    rng = streams.stream("minibatch")

    for step in range(steps):
        index = minibatch_indices(n, settings.laplace_batch, rng)
        values, grads = joint_value_and_grad(model, theta, X[index], y[index], weights[index], n / index.size)
        loss = float(values[0])
        if not math.isfinite(loss) or not np.all(np.isfinite(grads)):
            raise NonFiniteLossError("Laplace MAP search diverged", step)
        theta = optimizer.step({"theta": theta}, {"theta": grads[0]})["theta"]
        if monitor is not None:
            monitor.loss(stage, loss, int(np.count_nonzero(weights > 0)))

    floor = settings.curvature_floor
    curvature = hessian_diagonal(model, theta, X, y, weights)
    value, grad = joint_value_and_grad(model, theta, X, y, weights)
    candidate = theta - grad[0] / np.maximum(curvature, floor)
    candidate_value, _ = joint_value_and_grad(model, candidate, X, y, weights)
    if np.isfinite(candidate_value[0]) and candidate_value[0] < value[0]:
        theta = candidate
        curvature = hessian_diagonal(model, theta, X, y, weights)

    if not np.all(np.isfinite(curvature)):
        raise NonFiniteLossError("Laplace curvature is not finite", steps)
    clipped = int(np.count_nonzero(curvature < floor))
    if clipped:
        logger.warning(f"Laplace fit: {clipped} of {p} curvature entries raised to the floor {floor:g}")
    curvature = np.maximum(curvature, floor)
    psi = VariationalGaussian(theta, -0.5 * np.log(curvature))
    return LaplaceFit(psi=psi, map=theta, curvature=curvature, clipped=clipped)


def train_subset_laplace(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                         test: Optional[Dataset] = None) -> TrainResult:
    """Diagonal Laplace approximation on a uniform random subset weighted N/M."""
    coreset = init_coreset("subset", train, settings.coreset_size, streams.stream("init"), FIXED_RATIO,
                           learn_locations=False, seed=streams.seed)
    monitor = Monitor("subset-laplace", model, settings, streams, test)
    fit = fit_subset_laplace(model, coreset.u, coreset.hard_labels(), coreset.weights(), settings, streams,
                             monitor=monitor)
    monitor.trace.rounds.append({"round": 0, "size": coreset.size, "clipped": fit.clipped})
    monitor.evaluate(fit.psi, coreset, corrected=False)
    return TrainResult(coreset, fit.psi, monitor.trace, corrected=False)


def train_sparse_vi_baseline(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                             test: Optional[Dataset] = None) -> TrainResult:
    """
    Greedy selection with projected Adam steps on the analytic weight gradient.

    Samples come from a diagonal Laplace fit of the weighted coreset posterior
    (the prior while the coreset has no support); the fit is warm-started
    after every weight update.
    """
    config = settings.bilevel
    config.validate_for(train.n)
    k, p = config.mc_samples, model.parameter_count
    coreset = empty_coreset(train, FREE_NONNEG)
    psi = VariationalGaussian.from_prior(model.prior_stds)
    refit_steps = max(settings.laplace_steps // 10, 1)
    monitor = Monitor("sparse-vi", model, settings, streams, test)
    rng = streams.stream("minibatch")

    def refit(current: VariationalGaussian) -> VariationalGaussian:
        if coreset.support().size == 0:
            return VariationalGaussian.from_prior(model.prior_stds)
        fit = fit_subset_laplace(model, coreset.u, coreset.hard_labels(), coreset.weights(), settings, streams,
                                 theta0=current.means, steps=refit_steps)
        return fit.psi

    for round_index in range(settings.selection_rounds):
        theta = psi.draw(streams.normal((k, p), "noise"))
        chosen = select_next(model, coreset, train, theta, None, config.batch_size, rng)
        coreset = grow(coreset, train, chosen)
        optimizer = Adam({"v": settings.sparse_vi_lr})

        for _ in range(settings.sparse_vi_steps):
            theta = psi.draw(streams.normal((k, p), "noise"))
            index = minibatch_indices(train.n, config.batch_size, rng)
            stats = greedy_stats(coreset_loglik_matrix(model, coreset, theta),
                                 model.loglik_matrix(theta, train.X[index], train.y[index]),
                                 coreset.weights(), train.n / index.size)
            updated = optimizer.step({"v": coreset.v_raw}, {"v": weight_gradient(stats)})
            coreset.update(updated)
            monitor.loss("sparse-vi", float(np.mean(stats.residual ** 2)), int(coreset.support().size))
            psi = refit(psi)
            if monitor.due():
                monitor.evaluate(psi, coreset, corrected=False)

        support = int(coreset.support().size)
        monitor.trace.rounds.append({"round": round_index, "selected": int(chosen), "size": coreset.size,
                                     "support": support})
        logger.info(f"sparse-vi round {round_index}: selected {chosen}, support {support}")

    monitor.evaluate(psi, coreset, corrected=False)
    return TrainResult(coreset, psi, monitor.trace, corrected=False)
