"""
Published hyperparameters per dataset, used as defaults under a config file.

`PSVI_PRESETS` hold the pseudocoreset settings and `SPARSE_PRESETS` the
settings of the sparse constructions and their Laplace-based baselines. The
learning rate quoted for psi is the inner-loop rate; the plain VI fits reuse
it through `outer_lrs["psi"]`.
"""
import copy
from typing import Dict

SPARSE_METHODS = frozenset({"bb-sparse-incremental", "bb-sparse-batch", "bb-sparse-prune", "sparse-vi",
                            "subset-laplace"})

_LOGREG = {"kind": "logistic-regression", "num_classes": 2}
_SMALL_BNN = {"kind": "feedforward-bnn", "hidden_widths": [20], "activation": "tanh"}


def _psvi(psi: float, u: float, v: float, alpha: float, init_std: float, inner: int, batch: int) -> dict:
    return {
        "inner_lr": psi,
        "inner_steps": inner,
        "batch_size": batch,
        "init_std": init_std,
        "outer_lrs": {"psi": psi, "u": u, "v": v, "beta": v, "alpha": alpha},
    }


def _sparse(psi: float, v: float, init_std: float, inner: int, outer: int, batch: int, mc: int) -> dict:
    return {
        "inner_lr": psi,
        "inner_steps": inner,
        "outer_iterations": outer,
        "batch_size": batch,
        "mc_samples": mc,
        "init_std": init_std,
        "outer_lrs": {"psi": psi, "v": v},
    }


PSVI_PRESETS: Dict[str, dict] = {
    "phishing": {"model": _LOGREG, "bilevel": _psvi(1e-3, 1e-3, 1e-3, 1e-3, 1e-6, 100, 256)},
    "adult": {"model": _LOGREG, "bilevel": _psvi(1e-3, 1e-4, 1e-3, 1e-3, 1e-6, 100, 256)},
    "webspam": {"model": _LOGREG, "bilevel": _psvi(1e-3, 1e-4, 1e-3, 1e-3, 1e-6, 100, 256)},
    "half-moon": {"model": _SMALL_BNN, "bilevel": _psvi(1e-4, 1e-2, 1e-1, 1e-3, 1e-4, 50, 128)},
    "four-class": {"model": _SMALL_BNN, "bilevel": _psvi(1e-4, 1e-2, 1e-1, 1e-3, 1e-3, 50, 128)},
    "synthetic-logreg": {"model": _LOGREG, "bilevel": _psvi(1e-3, 1e-3, 1e-3, 1e-3, 1e-3, 50, 128)},
}

SPARSE_PRESETS: Dict[str, dict] = {
    "phishing": {
        "model": _LOGREG,
        "bilevel": _sparse(1e-1, 1e-2, 1e-6, 50, 200, 256, 64),
        "coreset": {"laplace_lr": 1e-1, "sparse_vi_lr": 1e-2},
    },
    "adult": {
        "model": _LOGREG,
        "bilevel": _sparse(1e-1, 1e-2, 1e-6, 50, 200, 256, 32),
        "coreset": {"laplace_lr": 1e-1, "sparse_vi_lr": 1e-2},
    },
    "webspam": {
        "model": _LOGREG,
        "bilevel": _sparse(1e-3, 1e-1, 1e-3, 200, 400, 512, 64),
        "coreset": {"laplace_lr": 1e-1, "sparse_vi_lr": 1e-1},
    },
    "four-class": {
        "model": _SMALL_BNN,
        "bilevel": _sparse(1e-4, 1e-1, 1e-3, 50, 600, 128, 10),
        "coreset": {"prune_sizes": [250, 100, 20], "prune_iterations": 200},
    },
}


def merge(base: dict, override: dict) -> dict:
    """Recursive dict merge; values of `override` win."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def preset_for(dataset: str, method: str) -> dict:
    """Preset tables for a dataset/method pair; empty when none is published."""
    if method in SPARSE_METHODS and dataset in SPARSE_PRESETS:
        return copy.deepcopy(SPARSE_PRESETS[dataset])
    return copy.deepcopy(PSVI_PRESETS.get(dataset, {}))
