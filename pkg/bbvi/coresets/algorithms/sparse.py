"""Black-box sparse coresets of real datapoints: incremental, batch and pruning constructions."""
import logging
from typing import Optional, Sequence
import numpy as np
from ..coreset import FREE_NONNEG, Coreset, empty_coreset, init_coreset
from ..data.dataset import Dataset
from ..exceptions import ConfigurationError, DegenerateWeightsError
from ..models import Model
from ..optim import BilevelOptimizer
from ..predict import sample_weights
from ..rng import RandomStreams
from ..variational import VariationalGaussian
from .base import MethodSettings, Monitor, TrainResult, minibatch_indices
from .greedy import greedy_select, greedy_stats
from .psvi import fit_on_coreset, run_bilevel


logger = logging.getLogger(__name__)


def coreset_loglik_matrix(model: Model, coreset: Coreset, theta: np.ndarray) -> np.ndarray:
    if coreset.size == 0:
        return np.zeros((theta.shape[0], 0))
    return model.loglik_matrix(theta, coreset.u, coreset.hard_labels())


def select_next(model: Model, coreset: Coreset, train: Dataset, theta: np.ndarray, weights: Optional[np.ndarray],
                batch_size: int, rng: np.random.Generator) -> int:
    """One greedy step on a fresh minibatch; returns the chosen dataset index."""
    index = minibatch_indices(train.n, batch_size, rng)
    stats = greedy_stats(coreset_loglik_matrix(model, coreset, theta),
                         model.loglik_matrix(theta, train.X[index], train.y[index]),
                         coreset.weights(), train.n / index.size, weights)
    active = coreset.source_indices if coreset.source_indices is not None else np.zeros(0, dtype=np.int64)
    return greedy_select(stats, active, index)


def grow(coreset: Coreset, train: Dataset, chosen: int) -> Coreset:
    """Attach dataset row `chosen` at weight 0 unless it is already in the coreset."""
    if coreset.source_indices is not None and chosen in set(coreset.source_indices.tolist()):
        return coreset
    return coreset.attach(train.X[chosen], int(train.y[chosen]), chosen)


def train_bb_sparse_incremental(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                                test: Optional[Dataset] = None) -> TrainResult:
    """
    Greedy black-box construction from the empty coreset. Each round fits psi
    to the weighted coreset, importance-corrects a batch of samples, attaches
    the point best correlated with the residual and refines the weights with
    bilevel steps.
    """
    config = settings.bilevel
    config.validate_for(train.n)
    k, p = config.mc_samples, model.parameter_count
    coreset = empty_coreset(train, FREE_NONNEG)
    psi = VariationalGaussian.initial(p, config.init_std)
    monitor = Monitor("bb-sparse-incremental", model, settings, streams, test)
    rng = streams.stream("minibatch")

    for round_index in range(settings.selection_rounds):
        psi = fit_on_coreset(model, coreset, psi, settings.fit_steps, settings.fit_lr, k, streams, monitor, "fit")
        theta = psi.draw(streams.normal((k, p), "noise"))
        weights = sample_weights(model, psi, coreset, theta, config.weight_form)
        chosen = select_next(model, coreset, train, theta, weights, config.batch_size, rng)
        coreset = grow(coreset, train, chosen)

        optimizer = BilevelOptimizer(model, coreset, config, streams, psi=psi)
        run_bilevel(optimizer, train, settings.refine_iterations, monitor, "refine")
        coreset, psi = optimizer.coreset, optimizer.psi
        support = int(coreset.support().size)
        monitor.trace.rounds.append({"round": round_index, "selected": int(chosen), "size": coreset.size,
                                     "support": support})
        logger.info(f"bb-sparse-incremental round {round_index}: selected {chosen}, support {support}")

    monitor.evaluate(psi, coreset)
    return TrainResult(coreset, psi, monitor.trace)


def train_bb_sparse_batch(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                          test: Optional[Dataset] = None) -> TrainResult:
    """Uniform subset with v = (N / M) * 1, then bilevel refinement of v with locations frozen."""
    config = settings.bilevel
    config.validate_for(train.n)
    coreset = init_coreset("subset", train, settings.coreset_size, streams.stream("init"), FREE_NONNEG,
                           learn_locations=False, seed=streams.seed)
    optimizer = BilevelOptimizer(model, coreset, config, streams)
    monitor = Monitor("bb-sparse-batch", model, settings, streams, test)
    run_bilevel(optimizer, train, config.outer_iterations, monitor, "bilevel")
    monitor.evaluate(optimizer.psi, optimizer.coreset)
    return TrainResult(optimizer.coreset, optimizer.psi, monitor.trace)


def resample_support(coreset: Coreset, size: int, rng: np.random.Generator) -> Coreset:
    """
    Multinomial draw of `size` points proportional to the current weights.
    Duplicates collapse, so the new support has at most `size` points, each
    weighted N / size.
    """
    weights = coreset.weights()
    total = float(weights.sum())
    if not total > 0:
        raise DegenerateWeightsError("cannot resample a coreset whose weights are all zero")
    counts = rng.multinomial(size, weights / total)
    keep = np.flatnonzero(counts)
    return coreset.select(keep, v_raw=np.full(keep.size, coreset.n / size))


def prune(model: Model, train: Dataset, sizes: Sequence[int], settings: MethodSettings, streams: RandomStreams,
          test: Optional[Dataset] = None) -> TrainResult:
    """
    Shrink a batch coreset through decreasing sizes. Every round resamples
    the support, resets the weights to N / C_i, reinitializes psi and the
    optimizers, and retrains.
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigurationError("pruning needs at least one coreset size")
    if any(a <= b for a, b in zip(sizes, sizes[1:])):
        raise ConfigurationError("pruning sizes must be strictly decreasing")
    if sizes[0] > train.n:
        raise ConfigurationError(f"first pruning size {sizes[0]} exceeds the {train.n} training points")
    config = settings.bilevel
    config.validate_for(train.n)
    per_round = settings.prune_iterations or config.outer_iterations // len(sizes)
    monitor = Monitor("bb-sparse-prune", model, settings, streams, test)
    rng = streams.stream("prune")

    coreset = init_coreset("subset", train, sizes[0], streams.stream("init"), FREE_NONNEG,
                           learn_locations=False, seed=streams.seed)
    optimizer = None
    for round_index, size in enumerate(sizes):
        if round_index > 0:
            coreset = resample_support(optimizer.coreset, size, rng)
        optimizer = BilevelOptimizer(model, coreset, config, streams)
        run_bilevel(optimizer, train, per_round, monitor, f"prune-{size}")
        last = monitor.trace.iterations[-1].outer_loss if per_round else float("nan")
        support = int(optimizer.coreset.support().size)
        monitor.trace.rounds.append({"round": round_index, "size": size, "support": support, "elbo": -last})
        logger.info(f"bb-sparse-prune round {round_index}: target {size}, support {support}")

    monitor.evaluate(optimizer.psi, optimizer.coreset)
    return TrainResult(optimizer.coreset, optimizer.psi, monitor.trace)


def train_bb_sparse_prune(model: Model, train: Dataset, settings: MethodSettings, streams: RandomStreams,
                          test: Optional[Dataset] = None) -> TrainResult:
    sizes = settings.prune_sizes or (settings.coreset_size,)
    return prune(model, train, sizes, settings, streams, test)
