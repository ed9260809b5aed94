"""Importance-corrected posterior predictive and held-out metrics."""
from dataclasses import asdict, dataclass
from typing import Optional, Tuple
import numpy as np
from .autodiff.tape import Tape
from .coreset import Coreset
from .data.dataset import Dataset
from .models import Model
from .objectives import importance_weights, normalized_ess
from .variational import VariationalGaussian

PROB_FLOOR = 1e-300


@dataclass(frozen=True)
class EvalReport:
    accuracy: float
    nll: float
    nll_presumed_unit: float
    ess: float
    k: int
    seed: Optional[int]
    n_test: int
    nll_unit_presumed: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def sample_weights(model: Model, psi: VariationalGaussian, coreset: Optional[Coreset], theta: np.ndarray,
                   weight_form: str = "exact") -> np.ndarray:
    """Normalized importance weights of numeric samples; uniform without a coreset."""
    k = theta.shape[0]
    if coreset is None:
        return np.full(k, 1.0 / k)
    tape = Tape()
    with tape.no_record():
        nodes = coreset.to_nodes(tape, register=False)
        batch = importance_weights(model, nodes, tape.constant(psi.means), tape.constant(psi.log_stds),
                                   tape.constant(theta), weight_form)
    return np.array(batch.w.value)


def posterior_predictive(model: Model, psi: VariationalGaussian, coreset: Optional[Coreset], X: np.ndarray,
                         noise: np.ndarray, weight_form: str = "exact") -> Tuple[np.ndarray, np.ndarray]:
    """
    p(y | x) ~= sum_k w~_k p(y | x, theta_k) with theta_k = psi.means + psi.stds * noise_k.

    Returns:
        (class probabilities (N, C), the weights w~ (K,))
    """
    theta = psi.draw(noise)
    weights = sample_weights(model, psi, coreset, theta, weight_form)
    probs = np.einsum("k,knc->nc", weights, model.predict_proba(theta, X))
    return probs, weights


def evaluate(model: Model, psi: VariationalGaussian, coreset: Optional[Coreset], test: Dataset, k: int,
             rng: np.random.Generator, seed: Optional[int] = None, weight_form: str = "exact") -> EvalReport:
    """Accuracy, mean NLL and ESS on a test set with one shared batch of K samples."""
    test.require_nonempty()
    noise = rng.standard_normal((k, model.parameter_count))
    probs, weights = posterior_predictive(model, psi, coreset, test.X, noise, weight_form)
    predicted = np.argmax(probs, axis=1)
    true_probs = probs[np.arange(test.n), test.y]
    nll = float(-np.mean(np.log(np.maximum(true_probs, PROB_FLOOR))))
    return EvalReport(
        accuracy=float(np.mean(predicted == test.y)),
        nll=nll,
        nll_presumed_unit=nll * 1000.0 / test.n,
        ess=normalized_ess(weights),
        k=k,
        seed=seed,
        n_test=test.n,
    )


def predictive_entropy(probs: np.ndarray) -> np.ndarray:
    """Entropy of each row of class probabilities, in nats."""
    probs = np.asarray(probs, dtype=np.float64)
    logs = np.log(np.where(probs > 0, probs, 1.0))
    return np.clip(-np.sum(probs * logs, axis=-1), 0.0, np.log(probs.shape[-1]))
