"""Correlation-based greedy selection of coreset points."""
from dataclasses import dataclass
from typing import Optional, Sequence
import numpy as np
from ..exceptions import EmptyCandidatePoolError, ShapeError


@dataclass(frozen=True)
class GreedyStats:
    """
    Sample statistics for one selection step.

    Attributes:
        g: (K, M) centered log-likelihoods of the active coreset points.
        g_prime: (K, B) centered log-likelihoods of the minibatch points.
        residual: (K,) scale * 1^T g'_k - v^T g_k.
        corr: (M,) correlations of the active points with the residual.
        corr_prime: (B,) correlations of the minibatch points with the residual.
        sample_weights: (K,) weights used for every expectation.
    """
    g: np.ndarray
    g_prime: np.ndarray
    residual: np.ndarray
    corr: np.ndarray
    corr_prime: np.ndarray
    sample_weights: np.ndarray


def centered_loglik(logliks: np.ndarray, weights: Optional[np.ndarray] = None) -> np.ndarray:
    """Subtract the (weighted) sample mean from each column of a (K, n) log-likelihood matrix."""
    logliks = np.asarray(logliks, dtype=np.float64)
    k = logliks.shape[0]
    weights = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64)
    if weights.shape != (k,):
        raise ShapeError(f"expected {k} sample weights, got shape {weights.shape}")
    return logliks - weights @ logliks


def _correlation(columns: np.ndarray, residual: np.ndarray, weights: np.ndarray) -> np.ndarray:
    if columns.shape[1] == 0:
        return np.zeros(0)
    covariance = weights @ (columns * residual[:, None])
    scale = np.sqrt(weights @ (columns * columns))
    safe = np.where(scale > 0, scale, 1.0)
    return np.where(scale > 0, covariance / safe, 0.0)


def greedy_stats(coreset_logliks: np.ndarray, batch_logliks: np.ndarray, v: np.ndarray, scale: float,
                 weights: Optional[np.ndarray] = None) -> GreedyStats:
    """
    Args:
        coreset_logliks: (K, M) raw log-likelihoods of the active points.
        batch_logliks: (K, B) raw log-likelihoods of a data minibatch.
        v: (M,) current weights.
        scale: N / B.
        weights: (K,) normalized sample weights; uniform when omitted.
    """
    k = batch_logliks.shape[0]
    weights = np.full(k, 1.0 / k) if weights is None else np.asarray(weights, dtype=np.float64)
    coreset_logliks = np.asarray(coreset_logliks, dtype=np.float64).reshape(k, -1)
    g = centered_loglik(coreset_logliks, weights)
    g_prime = centered_loglik(batch_logliks, weights)
    residual = scale * g_prime.sum(axis=1) - g @ np.asarray(v, dtype=np.float64)
    return GreedyStats(
        g=g,
        g_prime=g_prime,
        residual=residual,
        corr=_correlation(g, residual, weights),
        corr_prime=_correlation(g_prime, residual, weights),
        sample_weights=weights,
    )


def greedy_select(stats: GreedyStats, active: Sequence[int], batch: Sequence[int]) -> int:
    """
    Dataset index of the next point to attach.

    Active points score |corr|; minibatch points not yet in the coreset score
    their signed corr'. Ties go to the lowest dataset index.

    Args:
        stats: output of `greedy_stats`.
        active: dataset index of each active coreset column.
        batch: dataset index of each minibatch column.
    """
    active = [int(i) for i in active]
    batch = [int(i) for i in batch]
    if len(active) != stats.corr.shape[0] or len(batch) != stats.corr_prime.shape[0]:
        raise ShapeError("candidate indices do not match the statistics")
    members = set(active)
    candidates = [(abs(float(c)), index) for c, index in zip(stats.corr, active)]
    candidates += [(float(c), index) for c, index in zip(stats.corr_prime, batch) if index not in members]
    if not candidates:
        raise EmptyCandidatePoolError("no active or minibatch point to select from")
    best = max(score for score, _ in candidates)
    return min(index for score, index in candidates if score == best)


def weight_gradient(stats: GreedyStats) -> np.ndarray:
    """Stochastic gradient of the KL objective in v: -E[g_k * residual_k]."""
    return -(stats.sample_weights @ (stats.g * stats.residual[:, None]))
