"""
Seeds x coreset sizes for one experiment config, with per-trial reports and
an aggregate table.

Output layout under `<output_dir>/<slug(name)>-<hash[:12]>/`::

    config.json                 resolved config, hash, package version
    trial-m<M>-seed<S>.json     EvalReport + TrainTrace metrics
    coreset-m<M>-seed<S>.json   coreset artifact (exact floats)
    psi-m<M>-seed<S>.json       variational parameters (exact floats)
    error-m<M>-seed<S>.json     written instead when the trial fails
    aggregate.csv               mean and standard error per M
"""
import csv
import logging
import math
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Tuple
import numpy as np
from ..data.dataset import Dataset
from ..data.loader import load_dataset
from ..exceptions import ArtifactError, CoresetError
from ..json import hex_array, read_json, unhex_array, write_json
from ..models import FEEDFORWARD_BNN, Model, ModelSpec, build_model
from ..predict import evaluate
from ..registry import MethodRegistry, method_registry
from ..rng import RandomStreams
from ..settings import ExperimentConfig, load_settings_document
from ..utils import config_hash, package_version, run_folder_name
from ..variational import VariationalGaussian


logger = logging.getLogger(__name__)

AGGREGATE_FIELDS = (
    "method", "coreset_size", "n_seeds", "accuracy_mean", "accuracy_stderr", "nll_mean", "nll_stderr",
    "nll_presumed_unit_mean", "ess_mean", "config_hash",
)


@dataclass
class ExperimentOutputs:
    folder: Path
    trials: List[Path] = field(default_factory=list)
    errors: List[Path] = field(default_factory=list)
    aggregate: Optional[Path] = None

    @property
    def ok(self) -> bool:
        return not self.errors


def experiment_folder(config: ExperimentConfig, out: Optional[Path] = None) -> Path:
    return Path(out or config.output_dir) / run_folder_name(config.name, config.config_hash)


def trial_stem(size: Optional[int], seed: int) -> str:
    return f"seed{seed}" if size is None else f"m{size}-seed{seed}"


def resolve_model(spec: ModelSpec, train: Dataset) -> Model:
    """Size the model to the data: input dimension always, output width for networks."""
    spec = replace(spec, input_dim=train.d)
    if spec.kind == FEEDFORWARD_BNN:
        spec = spec.with_classes(train.num_classes)
    return build_model(spec)


def save_psi(path, psi: VariationalGaussian, digest: str) -> Path:
    return write_json(path, {"config_hash": digest, "means": hex_array(psi.means), "log_stds": hex_array(psi.log_stds)})


def load_psi(path) -> VariationalGaussian:
    data = read_json(path)
    try:
        return VariationalGaussian(unhex_array(data["means"]), unhex_array(data["log_stds"]))
    except KeyError as e:
        raise ArtifactError(f"Malformed psi artifact {path}: missing {e}")


def run_trial(config: ExperimentConfig, size: Optional[int], seed: int, folder: Path,
              registry: Optional[MethodRegistry] = None) -> Path:
    """Train and evaluate one (size, seed) pair; returns the trial report path."""
    registry = registry or method_registry
    digest = config.config_hash
    stem = trial_stem(size, seed)
    streams = RandomStreams(seed)
    train, test = load_dataset(config.dataset, streams)
    model = resolve_model(config.model, train)
    settings = config.settings_for(size, seed)
    trainer = registry.get(config.method)
    logger.info(f"{config.method} {stem}: N={train.n}, P={model.parameter_count}")

    result = trainer(model, train, settings, streams, test)
    report = evaluate(model, result.psi, result.evaluation_coreset(), test, settings.eval_samples,
                      streams.fresh("eval"), seed, settings.bilevel.weight_form)
    model_hash = config_hash(model.spec.to_dict())
    if result.coreset is not None:
        result.coreset.save(folder / f"coreset-{stem}.json", model_hash)
    save_psi(folder / f"psi-{stem}.json", result.psi, digest)

    payload = {
        "config_hash": digest,
        "version": package_version(),
        "method": config.method,
        "seed": seed,
        "coreset_size": size,
        "support_size": None if result.coreset is None else int(result.coreset.support().size),
        "corrected": result.corrected,
        "model": model.spec.to_dict(),
        "model_hash": model_hash,
        "report": report.to_dict(),
        "trace": result.trace.metrics(),
        "seconds": float(sum(r.seconds for r in result.trace.iterations)),
    }
    path = write_json(folder / f"trial-{stem}.json", payload)
    logger.info(f"{config.method} {stem}: accuracy={report.accuracy:.4f} nll={report.nll:.4f} ess={report.ess:.3f}")
    return path


def write_error(folder: Path, config: ExperimentConfig, size: Optional[int], seed: int, error: BaseException,
                stem: Optional[str] = None) -> Path:
    """Structured report of a failed trial, written where its trial report would have gone."""
    payload = {
        "config_hash": config.config_hash,
        "method": config.method,
        "seed": seed,
        "coreset_size": size,
        "type": type(error).__name__,
        "message": str(error),
        "iteration": getattr(error, "iteration", None),
        "traceback": "".join(traceback.format_exception(type(error), error, error.__traceback__)),
    }
    return write_json(folder / f"error-{stem or trial_stem(size, seed)}.json", payload)


def _trial_task(args: Tuple[ExperimentConfig, Optional[int], int, Path, Optional[MethodRegistry]]) -> Tuple[bool, Path]:
    config, size, seed, folder, registry = args
    try:
        return True, run_trial(config, size, seed, folder, registry)
    except CoresetError as e:
        logger.error(f"{config.method} {trial_stem(size, seed)} failed: {e}")
        return False, write_error(folder, config, size, seed, e)
    except Exception as e:
        logger.exception(f"{config.method} {trial_stem(size, seed)} failed unexpectedly: {e}")
        return False, write_error(folder, config, size, seed, e)


def stderr(values: List[float]) -> float:
    """Standard error of the mean; 0 for a single value."""
    if len(values) < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(len(values)))


def aggregate_rows(trials: List[dict]) -> List[dict]:
    """One row per coreset size from per-trial payloads, in increasing size."""
    groups = {}
    for trial in trials:
        groups.setdefault(trial["coreset_size"], []).append(trial)
    rows = []
    for size in sorted(groups, key=lambda s: -1 if s is None else s):
        members = sorted(groups[size], key=lambda t: t["seed"])
        accuracy = [t["report"]["accuracy"] for t in members]
        nll = [t["report"]["nll"] for t in members]
        rows.append({
            "method": members[0]["method"],
            "coreset_size": "" if size is None else size,
            "n_seeds": len(members),
            "accuracy_mean": float(np.mean(accuracy)),
            "accuracy_stderr": stderr(accuracy),
            "nll_mean": float(np.mean(nll)),
            "nll_stderr": stderr(nll),
            "nll_presumed_unit_mean": float(np.mean([t["report"]["nll_presumed_unit"] for t in members])),
            "ess_mean": float(np.mean([t["report"]["ess"] for t in members])),
            "config_hash": members[0]["config_hash"],
        })
    return rows


def write_csv(path: Path, fieldnames, rows: List[dict]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def aggregate_folder(folder: Path) -> Path:
    """Recompute aggregate.csv from the trial files on disk."""
    trials = [read_json(path) for path in sorted(Path(folder).glob("trial-*.json"))]
    return write_csv(Path(folder) / "aggregate.csv", AGGREGATE_FIELDS, aggregate_rows(trials))


def run_experiment(config: ExperimentConfig, registry: Optional[MethodRegistry] = None,
                   out: Optional[Path] = None) -> ExperimentOutputs:
    """
    Run every (size, seed) trial of a config and write its reports.

    Trials run in a process pool when `config.workers > 1`; each worker writes
    only its own trial files and the aggregate is written here afterwards.
    """
    folder = experiment_folder(config, out)
    folder.mkdir(parents=True, exist_ok=True)
    write_json(folder / "config.json", {**load_settings_document(config), "version": package_version()})
    tasks = [(config, size, seed, folder, registry) for size in config.sizes for seed in config.seeds]
    logger.info(f"{config.name}: {len(tasks)} trials of {config.method} into {folder}")

    if config.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_trial_task, tasks))
    else:
        results = [_trial_task(task) for task in tasks]

    outputs = ExperimentOutputs(folder)
    for ok, path in results:
        (outputs.trials if ok else outputs.errors).append(path)
    if outputs.trials:
        outputs.aggregate = aggregate_folder(folder)
    if outputs.errors:
        logger.error(f"{config.name}: {len(outputs.errors)} of {len(tasks)} trials failed")
    return outputs
