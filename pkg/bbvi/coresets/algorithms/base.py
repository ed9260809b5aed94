import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Tuple
import numpy as np
from ..autodiff.tape import Node, Tape
from ..coreset import INIT_STRATEGIES, SOFTMAX, WEIGHT_MODES, Coreset
from ..data.dataset import Dataset
from ..exceptions import ConfigurationError, NonFiniteError, NonFiniteLossError
from ..models import Model
from ..optim import Adam, BilevelConfig, BilevelDiagnostics
from ..predict import EvalReport, evaluate
from ..rng import RandomStreams
from ..variational import VariationalGaussian, sample


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MethodSettings:
    """
    Knobs shared by the training algorithms.

    Attributes:
        bilevel: nested-optimization settings, also used for the plain VI fits
            (outer_iterations, batch_size, mc_samples, outer_lrs["psi"]).
        coreset_size: M.
        weight_mode: weight parametrization of learned pseudocoresets.
        init_strategy: "subset" or "gaussian".
        learn_locations: optimize pseudo-inputs u.
        soft_labels: learn label logits z.
        selection_rounds: greedy rounds of the incremental constructions.
        refine_iterations: weight-refinement outer iterations per round.
        fit_steps / fit_lr: classical-ELBO fit of psi on a weighted coreset.
        prune_sizes: decreasing coreset sizes for pruning.
        prune_iterations: outer iterations per pruning round; 0 splits
            bilevel.outer_iterations evenly.
        laplace_steps / laplace_lr / laplace_batch: MAP search of the Laplace fit.
        curvature_floor: smallest accepted Hessian diagonal entry.
        sparse_vi_lr: Adam learning rate on v for the analytic-gradient baseline.
        sparse_vi_steps: weight updates per selection round of that baseline.
        eval_every: evaluate on the test set every this many iterations (0: only at the end).
        eval_samples: K used for evaluation.
    """
    bilevel: BilevelConfig = field(default_factory=BilevelConfig)
    coreset_size: int = 10
    weight_mode: str = SOFTMAX
    init_strategy: str = "subset"
    learn_locations: bool = True
    soft_labels: bool = False
    selection_rounds: int = 10
    refine_iterations: int = 10
    fit_steps: int = 100
    fit_lr: float = 1e-1
    prune_sizes: Tuple[int, ...] = ()
    prune_iterations: int = 0
    laplace_steps: int = 500
    laplace_lr: float = 1e-2
    laplace_batch: int = 256
    curvature_floor: float = 1e-8
    sparse_vi_lr: float = 1e-2
    sparse_vi_steps: int = 20
    eval_every: int = 0
    eval_samples: int = 10

    def __post_init__(self):
        object.__setattr__(self, "prune_sizes", tuple(int(s) for s in self.prune_sizes))
        if self.coreset_size < 1:
            raise ConfigurationError("coreset size must be positive")
        if self.weight_mode not in WEIGHT_MODES:
            raise ConfigurationError(f"Unknown weight mode '{self.weight_mode}'")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ConfigurationError(f"Unknown init strategy '{self.init_strategy}'")
        if self.selection_rounds < 1:
            raise ConfigurationError("selection_rounds must be at least 1")
        if any(a <= b for a, b in zip(self.prune_sizes, self.prune_sizes[1:])):
            raise ConfigurationError("prune_sizes must be strictly decreasing")
        if self.eval_samples < 1:
            raise ConfigurationError("eval_samples must be positive")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["prune_sizes"] = list(self.prune_sizes)
        return data


@dataclass
class IterationRecord:
    iteration: int
    stage: str
    outer_loss: float
    inner_final_loss: float
    ess: float
    coreset_size: int
    seconds: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EvaluationRecord:
    iteration: int
    coreset_size: int
    accuracy: float
    nll: float
    ess: float
    soft_label_kl: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainTrace:
    """Per-iteration and per-evaluation records of one training run."""
    method: str
    iterations: List[IterationRecord] = field(default_factory=list)
    evaluations: List[EvaluationRecord] = field(default_factory=list)
    rounds: List[dict] = field(default_factory=list)

    @property
    def last_iteration(self) -> int:
        return self.iterations[-1].iteration if self.iterations else -1

    def record(self, stage: str, outer_loss: float, inner_final_loss: float, ess: float,
               coreset_size: int, seconds: float = 0.0) -> IterationRecord:
        values = (outer_loss, inner_final_loss, ess)
        if not all(math.isfinite(v) for v in values):
            raise NonFiniteLossError(f"{stage}: non-finite value in {values}", self.last_iteration + 1)
        entry = IterationRecord(self.last_iteration + 1, stage, float(outer_loss), float(inner_final_loss),
                                float(ess), int(coreset_size), float(seconds))
        self.iterations.append(entry)
        return entry

    def record_evaluation(self, report: EvalReport, coreset_size: int,
                          soft_label_kl: Optional[float] = None) -> EvaluationRecord:
        entry = EvaluationRecord(self.last_iteration, int(coreset_size), report.accuracy, report.nll, report.ess,
                                 soft_label_kl)
        self.evaluations.append(entry)
        return entry

    def metrics(self) -> dict:
        """Everything except wall-clock timings."""
        return {
            "method": self.method,
            "iterations": [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in self.iterations],
            "evaluations": [r.to_dict() for r in self.evaluations],
            "rounds": list(self.rounds),
        }

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "iterations": [r.to_dict() for r in self.iterations],
            "evaluations": [r.to_dict() for r in self.evaluations],
            "rounds": list(self.rounds),
        }


@dataclass
class TrainResult:
    coreset: Optional[Coreset]
    psi: VariationalGaussian
    trace: TrainTrace
    corrected: bool = True

    @property
    def weights(self) -> Optional[np.ndarray]:
        return None if self.coreset is None else self.coreset.weights()

    def evaluation_coreset(self) -> Optional[Coreset]:
        """Coreset used to importance-correct predictions, if any."""
        return self.coreset if self.corrected else None


class Monitor:
    """Times iterations and evaluates on held-out data at a fixed cadence."""

    def __init__(self, method: str, model: Model, settings: MethodSettings, streams: RandomStreams,
                 test: Optional[Dataset] = None):
        self.trace = TrainTrace(method)
        self.model = model
        self.settings = settings
        self.streams = streams
        self.test = test
        self._clock = time.perf_counter()

    def iteration(self, stage: str, diagnostics: BilevelDiagnostics, coreset_size: int) -> IterationRecord:
        now = time.perf_counter()
        entry = self.trace.record(stage, diagnostics.outer_loss, diagnostics.inner_final_loss, diagnostics.ess,
                                  coreset_size, now - self._clock)
        self._clock = now
        return entry

    def loss(self, stage: str, loss: float, coreset_size: int, ess: float = 1.0) -> IterationRecord:
        now = time.perf_counter()
        entry = self.trace.record(stage, loss, loss, ess, coreset_size, now - self._clock)
        self._clock = now
        return entry

    def due(self) -> bool:
        every = self.settings.eval_every
        return self.test is not None and every > 0 and (self.trace.last_iteration + 1) % every == 0

    def evaluate(self, psi: VariationalGaussian, coreset: Optional[Coreset], corrected: bool = True,
                 soft_label_kl: Optional[float] = None) -> Optional[EvalReport]:
        if self.test is None:
            return None
        report = evaluate(self.model, psi, coreset if corrected else None, self.test, self.settings.eval_samples,
                          self.streams.fresh("eval"), self.streams.seed, self.settings.bilevel.weight_form)
        size = 0 if coreset is None else int(coreset.support().size)
        self.trace.record_evaluation(report, size, soft_label_kl)
        logger.info(f"{self.trace.method} @ {self.trace.last_iteration}: acc={report.accuracy:.4f} "
                    f"nll={report.nll:.4f} ess={report.ess:.3f} size={size}")
        return report


def minibatch_indices(n: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted uniform draw of min(B, n) indices without replacement."""
    return np.sort(rng.choice(n, size=min(batch_size, n), replace=False))


def draw_minibatch(dataset: Dataset, batch_size: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray, float]:
    """(X_B, y_B, N / B) from a uniform draw without replacement."""
    index = minibatch_indices(dataset.n, batch_size, rng)
    return dataset.X[index], dataset.y[index], dataset.n / index.size


LossBuilder = Callable[[Tape, Node, Node, Node], Node]


def fit_variational(model: Model, psi: VariationalGaussian, build_loss: LossBuilder, steps: int, lr: float,
                    k: int, streams: RandomStreams, monitor: Optional[Monitor] = None, stage: str = "fit",
                    coreset_size: int = 0, coreset: Optional[Coreset] = None,
                    corrected: bool = False) -> VariationalGaussian:
    """
    Plain reparameterized VI: Adam on (means, log_stds) for `steps` iterations.

    `build_loss(tape, means, log_stds, theta)` returns the scalar loss to minimize.
    Cadence evaluations use `coreset` for the importance correction when `corrected` is set.
    """
    optimizer = Adam({"means": lr, "log_stds": lr})
    p = model.parameter_count
    for step in range(steps):
        tape = Tape()
        means, log_stds = psi.to_nodes(tape)
        theta = sample(means, log_stds, streams.normal((k, p), "noise"))
        loss = build_loss(tape, means, log_stds, theta)
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteLossError(f"{stage} loss is not finite", step)
        grads = tape.gradient(loss, [means, log_stds])
        updated = optimizer.step({"means": psi.means, "log_stds": psi.log_stds},
                                 {"means": grads["psi.means"], "log_stds": grads["psi.log_stds"]})
        try:
            psi = VariationalGaussian(updated["means"], updated["log_stds"])
        except NonFiniteError:
            raise NonFiniteLossError(f"{stage} produced non-finite variational parameters", step)
        if monitor is not None:
            monitor.loss(stage, value, coreset_size)
            if monitor.due():
                monitor.evaluate(psi, coreset, corrected)
    return psi
