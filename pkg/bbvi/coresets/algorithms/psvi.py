"""Learned pseudocoresets and the plain mean-field VI baselines."""
import logging
from typing import Optional
import numpy as np
from ..autodiff import ops
from ..autodiff.tape import Tape
from ..coreset import FIXED_RATIO, Coreset, init_coreset
from ..data.dataset import Dataset
from ..models import Model
from ..objectives import elbo_classical, soft_label_kl
from ..optim import BilevelOptimizer
from ..rng import RandomStreams
from ..variational import VariationalGaussian
from .base import MethodSettings, Monitor, TrainResult, draw_minibatch, fit_variational


logger = logging.getLogger(__name__)


def soft_label_report(model: Model, coreset: Coreset, psi: VariationalGaussian, k: int,
                      streams: RandomStreams) -> Optional[float]:
    """Mean soft-label KL bound over the coreset, None for hard labels."""
    if not coreset.soft_labels:
        return None
    tape = Tape()
    with tape.no_record():
        nodes = coreset.to_nodes(tape, register=False)
        theta = tape.constant(psi.draw(streams.fresh("eval").standard_normal((k, model.parameter_count))))
        w = tape.constant(np.full(k, 1.0 / k))
        return float(np.mean(soft_label_kl(model, nodes, theta, w).value))


def run_bilevel(optimizer: BilevelOptimizer, train: Dataset, iterations: int, monitor: Monitor, stage: str) -> None:
    """Outer iterations on fresh minibatches with cadence evaluations."""
    settings = monitor.settings
    rng = optimizer.streams.stream("minibatch")
    for _ in range(iterations):
        X, y, scale = draw_minibatch(train, settings.bilevel.batch_size, rng)
        diagnostics = optimizer.step(X, y, scale)
        monitor.iteration(stage, diagnostics, int(np.count_nonzero(optimizer.coreset.weights() > 0)))
        if monitor.due():
            monitor.evaluate(optimizer.psi, optimizer.coreset,
                             soft_label_kl=soft_label_report(optimizer.model, optimizer.coreset, optimizer.psi,
                                                             settings.eval_samples, optimizer.streams))


def train_bb_psvi(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                  test: Optional[Dataset] = None) -> TrainResult:
    """
    Learn pseudo-inputs (and weights, and soft labels when enabled) with the
    bilevel black-box objective.
    """
    config = settings.bilevel
    config.validate_for(train.n)
    coreset = init_coreset(settings.init_strategy, train, settings.coreset_size, streams.stream("init"),
                           settings.weight_mode, settings.soft_labels, settings.learn_locations, seed=streams.seed)
    optimizer = BilevelOptimizer(model, coreset, config, streams)
    monitor = Monitor("bb-psvi", model, settings, streams, test)
    logger.info(f"bb-psvi: M={coreset.size} mode={coreset.weight_mode} init={settings.init_strategy} "
                f"T={config.inner_steps} iterations={config.outer_iterations} joint={config.joint}")
    run_bilevel(optimizer, train, config.outer_iterations, monitor, "bilevel")
    monitor.evaluate(optimizer.psi, coreset,
                     soft_label_kl=soft_label_report(model, coreset, optimizer.psi, settings.eval_samples, streams))
    return TrainResult(coreset, optimizer.psi, monitor.trace)


def fit_on_coreset(model: Model, coreset: Coreset, psi: VariationalGaussian, steps: int, lr: float, k: int,
                   streams: RandomStreams, monitor: Optional[Monitor] = None, stage: str = "fit") -> VariationalGaussian:
    """Classical-ELBO fit of psi to the weighted coreset."""
    def build(tape, means, log_stds, theta):
        nodes = coreset.to_nodes(tape, register=False)
        return ops.negate(elbo_classical(model, means, log_stds, theta, None, None, coreset=nodes))

    return fit_variational(model, psi, build, steps, lr, k, streams, monitor, stage,
                           int(np.count_nonzero(coreset.weights() > 0)), coreset, corrected=False)


def train_random_coreset_baseline(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                                  test: Optional[Dataset] = None) -> TrainResult:
    """Uniform random subset with weights N/M, then mean-field VI on it."""
    config = settings.bilevel
    coreset = init_coreset("subset", train, settings.coreset_size, streams.stream("init"), FIXED_RATIO,
                           learn_locations=False, seed=streams.seed)
    monitor = Monitor("random-coreset", model, settings, streams, test)
    psi = VariationalGaussian.initial(model.parameter_count, config.init_std)
    psi = fit_on_coreset(model, coreset, psi, config.outer_iterations, config.outer_lrs["psi"], config.mc_samples,
                         streams, monitor, "mfvi")
    monitor.evaluate(psi, coreset, corrected=False)
    return TrainResult(coreset, psi, monitor.trace, corrected=False)


def train_full_mfvi(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                    test: Optional[Dataset] = None) -> TrainResult:
    """Mean-field VI on minibatches of the full training data with scale N/B."""
    config = settings.bilevel
    config.validate_for(train.n)
    rng = streams.stream("minibatch")
    monitor = Monitor("full-mfvi", model, settings, streams, test)

    def build(tape, means, log_stds, theta):
        X, y, scale = draw_minibatch(train, config.batch_size, rng)
        return ops.negate(elbo_classical(model, means, log_stds, theta, X, y, scale))

    psi = VariationalGaussian.initial(model.parameter_count, config.init_std)
    psi = fit_variational(model, psi, build, config.outer_iterations, config.outer_lrs["psi"], config.mc_samples,
                          streams, monitor, "mfvi", train.n)
    monitor.evaluate(psi, None, corrected=False)
    return TrainResult(None, psi, monitor.trace, corrected=False)
