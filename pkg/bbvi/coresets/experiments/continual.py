"""
Class-incremental learning with a pseudocoreset as replay memory.

Each task brings new classes. With replay, the true data of earlier tasks is
dropped and replaced by N_k multinomial draws from the current coreset, where
N_k is the number of real points those tasks held; the coreset grows with
pseudopoints for the new classes, the output layer widens, psi is
reinitialized and the bilevel training runs on replay plus fresh data. The
ablation without replay trains each task on its fresh data alone.
"""
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence
import numpy as np
from ..algorithms import MethodSettings, Monitor, run_bilevel
from ..coreset import Coreset, init_coreset, trainable_groups
from ..data.dataset import Dataset, concatenate
from ..data.loader import load_dataset
from ..exceptions import ConfigurationError, CoresetError, DegenerateWeightsError, RunFailedError
from ..json import write_json
from ..models import Model, build_model
from ..optim import BilevelOptimizer
from ..predict import evaluate, posterior_predictive
from ..rng import RandomStreams
from ..settings import ContinualSpec, ExperimentConfig, load_settings_document
from ..utils import package_version
from ..variational import VariationalGaussian
from .runner import experiment_folder, stderr, write_csv, write_error


logger = logging.getLogger(__name__)

CONTINUAL_FIELDS = ("task", "classes_seen", "coreset_size", "n_seeds", "accuracy_mean", "accuracy_stderr",
                    "first_task_accuracy_mean", "config_hash")


@dataclass
class TaskRecord:
    task: int
    classes: List[int]
    classes_seen: List[int]
    coreset_size: int
    n_train: int
    accuracy: float
    nll: float
    ess: float
    accuracy_by_task: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "classes": self.classes,
            "classes_seen": self.classes_seen,
            "coreset_size": self.coreset_size,
            "n_train": self.n_train,
            "accuracy": self.accuracy,
            "nll": self.nll,
            "ess": self.ess,
            "accuracy_by_task": self.accuracy_by_task,
        }


def widen(dataset: Dataset, num_classes: int) -> Dataset:
    return replace(dataset, num_classes=num_classes)


def replay_dataset(coreset: Coreset, count: int, rng: np.random.Generator, num_classes: int) -> Dataset:
    """`count` multinomial draws of coreset points with probabilities proportional to their weights."""
    weights = coreset.weights()
    total = float(weights.sum())
    if not total > 0:
        raise DegenerateWeightsError("cannot replay from a coreset whose weights are all zero")
    draws = rng.multinomial(count, weights / total)
    index = np.repeat(np.arange(coreset.size), draws)
    return Dataset(coreset.u[index], coreset.hard_labels()[index], num_classes, split="replay", name="replay")


def grow_coreset(previous: Coreset, fresh: Dataset, classes: Sequence[int], m_new: int, past_evidence: int,
                 settings: MethodSettings, rng: np.random.Generator, num_classes: int) -> Coreset:
    """
    Previous pseudopoints plus `m_new` new ones for `classes`, with evidence
    split in proportion to the number of real points behind each part.
    """
    total = past_evidence + fresh.n
    old = previous.weights()
    old_share = old / old.sum() * past_evidence if old.sum() > 0 else np.full(previous.size, past_evidence / previous.size)
    parts_u, parts_z, targets = [previous.u], [previous.z], [old_share]
    if previous.soft_labels:
        padding = np.repeat(previous.z.min(axis=1, keepdims=True), num_classes - previous.num_classes, axis=1)
        parts_z = [np.hstack([previous.z, padding])]
    if m_new > 0:
        new = init_coreset(settings.init_strategy, fresh, m_new, rng, settings.weight_mode, settings.soft_labels,
                           settings.learn_locations, classes=classes)
        parts_u.append(new.u)
        parts_z.append(new.z)
        targets.append(np.full(m_new, fresh.n / m_new))
    else:
        logger.warning(f"no new pseudopoints for classes {list(classes)}; the coreset size did not grow")
    target = np.concatenate(targets)
    return Coreset(
        u=np.vstack(parts_u), z=np.concatenate(parts_z), num_classes=num_classes, n=total,
        weight_mode=settings.weight_mode, beta=np.log(np.maximum(target, 1e-300) / total), v_raw=target,
        soft_labels=settings.soft_labels,
        trainable=trainable_groups(settings.weight_mode, settings.learn_locations, settings.soft_labels),
        seed=previous.seed,
    )


def task_accuracies(model: Model, psi: VariationalGaussian, coreset: Optional[Coreset], test: Dataset,
                    tasks: Sequence[Sequence[int]], k: int, rng: np.random.Generator, weight_form: str) -> List[float]:
    """Accuracy on the test points of each task so far, one shared batch of samples."""
    noise = rng.standard_normal((k, model.parameter_count))
    probs, _ = posterior_predictive(model, psi, coreset, test.X, noise, weight_form)
    correct = np.argmax(probs, axis=1) == test.y
    out = []
    for classes in tasks:
        mask = np.isin(test.y, list(classes))
        out.append(float(np.mean(correct[mask])) if mask.any() else float("nan"))
    return out


def run_continual_seed(config: ExperimentConfig, seed: int, spec: Optional[ContinualSpec] = None) -> List[TaskRecord]:
    spec = spec or config.continual or ContinualSpec()
    streams = RandomStreams(seed)
    train, test = load_dataset(config.dataset, streams)
    missing = sorted(set(c for task in spec.tasks for c in task) - set(range(train.num_classes)))
    if missing:
        raise ConfigurationError(f"continual tasks name classes {missing} absent from {config.dataset.name}")
    replay_rng = streams.stream("replay")

    records: List[TaskRecord] = []
    seen: List[int] = []
    coreset: Optional[Coreset] = None
    psi: Optional[VariationalGaussian] = None
    past_evidence = 0
    for index, (classes, size) in enumerate(zip(spec.tasks, spec.coreset_sizes)):
        seen = seen + list(classes)
        width = max(max(seen) + 1, 2)
        model = build_model(replace(config.model, input_dim=train.d).with_classes(width))
        fresh = widen(train.with_classes(classes), width)
        test_seen = widen(test.with_classes(seen), width)
        settings = config.settings_for(size, seed)

        if index == 0 or not spec.replay:
            task_data = fresh
            start = init_coreset(settings.init_strategy, fresh, size, streams.stream("init"), settings.weight_mode,
                                 settings.soft_labels, settings.learn_locations, classes=classes, seed=seed)
        else:
            replayed = replay_dataset(coreset, past_evidence, replay_rng, width)
            task_data = concatenate(replayed, fresh)
            start = grow_coreset(coreset, fresh, classes, size - coreset.size, past_evidence, settings,
                                 streams.stream("init"), width)
        settings.bilevel.validate_for(task_data.n)
        optimizer = BilevelOptimizer(model, start, settings.bilevel, streams)
        monitor = Monitor("continual", model, settings, streams, test_seen)
        run_bilevel(optimizer, task_data, settings.bilevel.outer_iterations, monitor, f"task-{index}")
        coreset, psi = optimizer.coreset, optimizer.psi
        past_evidence += fresh.n

        report = evaluate(model, psi, coreset, test_seen, settings.eval_samples, streams.fresh("eval"), seed,
                          settings.bilevel.weight_form)
        by_task = task_accuracies(model, psi, coreset, test_seen, spec.tasks[:index + 1], settings.eval_samples,
                                  streams.fresh("eval"), settings.bilevel.weight_form)
        records.append(TaskRecord(index, list(classes), list(seen), coreset.size, task_data.n, report.accuracy,
                                  report.nll, report.ess, by_task))
        logger.info(f"continual seed {seed} task {index}: classes {seen} accuracy={report.accuracy:.4f} "
                    f"coreset={coreset.size} replay={spec.replay}")
    return records


def continual_rows(per_seed: Dict[int, List[TaskRecord]], digest: str) -> List[dict]:
    rows = []
    tasks = len(next(iter(per_seed.values()))) if per_seed else 0
    for t in range(tasks):
        records = [per_seed[seed][t] for seed in sorted(per_seed)]
        accuracy = [r.accuracy for r in records]
        rows.append({
            "task": t,
            "classes_seen": " ".join(str(c) for c in records[0].classes_seen),
            "coreset_size": records[0].coreset_size,
            "n_seeds": len(records),
            "accuracy_mean": float(np.mean(accuracy)),
            "accuracy_stderr": stderr(accuracy),
            "first_task_accuracy_mean": float(np.mean([r.accuracy_by_task[0] for r in records])),
            "config_hash": digest,
        })
    return rows


def run_continual(config: ExperimentConfig, out: Optional[Path] = None) -> Path:
    """
    Run the schedule for every seed; returns the output folder.

    A failing seed writes `error-continual-seed<S>.json` and the remaining
    seeds still run. `continual.csv` then covers the seeds that finished.

    Raises:
        RunFailedError: If any seed failed, after all reports are written.
    """
    spec = config.continual or ContinualSpec()
    folder = experiment_folder(config, out)
    folder.mkdir(parents=True, exist_ok=True)
    digest = config.config_hash
    write_json(folder / "config.json", {**load_settings_document(config), "version": package_version()})

    per_seed, errors = {}, []
    for seed in config.seeds:
        try:
            records = run_continual_seed(config, seed, spec)
        except CoresetError as e:
            logger.error(f"continual seed {seed} failed: {e}")
            errors.append(write_error(folder, config, None, seed, e, stem=f"continual-seed{seed}"))
            continue
        except Exception as e:
            logger.exception(f"continual seed {seed} failed unexpectedly: {e}")
            errors.append(write_error(folder, config, None, seed, e, stem=f"continual-seed{seed}"))
            continue
        per_seed[seed] = records
        write_json(folder / f"continual-seed{seed}.json", {
            "config_hash": digest, "seed": seed, "replay": spec.replay,
            "tasks": [r.to_dict() for r in records],
        })
    write_csv(folder / "continual.csv", CONTINUAL_FIELDS, continual_rows(per_seed, digest))
    if errors:
        raise RunFailedError(f"{len(errors)} of {len(config.seeds)} continual seeds failed", errors)
    return folder
