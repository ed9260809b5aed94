from .base import (
    EvaluationRecord,
    IterationRecord,
    MethodSettings,
    Monitor,
    TrainResult,
    TrainTrace,
    draw_minibatch,
    fit_variational,
    minibatch_indices,
)
from .baselines import LaplaceFit, fit_subset_laplace, train_sparse_vi_baseline, train_subset_laplace
from .greedy import GreedyStats, centered_loglik, greedy_select, greedy_stats, weight_gradient
from .psvi import fit_on_coreset, run_bilevel, train_bb_psvi, train_full_mfvi, train_random_coreset_baseline
from .sparse import prune, train_bb_sparse_batch, train_bb_sparse_incremental, train_bb_sparse_prune

__all__ = [
    "EvaluationRecord", "IterationRecord", "MethodSettings", "Monitor", "TrainResult", "TrainTrace",
    "draw_minibatch", "fit_variational", "minibatch_indices",
    "LaplaceFit", "fit_subset_laplace", "train_sparse_vi_baseline", "train_subset_laplace",
    "GreedyStats", "centered_loglik", "greedy_select", "greedy_stats", "weight_gradient",
    "fit_on_coreset", "run_bilevel", "train_bb_psvi", "train_full_mfvi", "train_random_coreset_baseline",
    "prune", "train_bb_sparse_batch", "train_bb_sparse_incremental", "train_bb_sparse_prune",
]
