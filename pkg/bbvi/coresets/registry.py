import inspect
import logging
from typing import Callable, Dict, List, Optional
from .algorithms import (
    TrainResult,
    train_bb_psvi,
    train_bb_sparse_batch,
    train_bb_sparse_incremental,
    train_bb_sparse_prune,
    train_full_mfvi,
    train_random_coreset_baseline,
    train_sparse_vi_baseline,
    train_subset_laplace,
)
from .exceptions import MethodAlreadyRegisteredError, MethodResolutionError

Trainer = Callable[..., TrainResult]

TRAINER_PARAMETERS = ("model", "train", "settings", "streams", "test")

# methods whose result does not depend on the coreset size
SIZE_FREE_METHODS = frozenset({"full-mfvi"})


class MethodRegistry:
    """
    Maps method names to trainers.

    A trainer is called as `trainer(model, train, settings, streams, test)`
    and returns a `TrainResult`.
    """

    def __init__(self):
        self._registry: Dict[str, Trainer] = {}
        self._logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")

    def register(self, name: str, trainer: Trainer) -> None:
        """
        Registers a trainer under a method name.

        Raises:
            MethodAlreadyRegisteredError: If the name is taken.
            TypeError: If the trainer does not accept the trainer parameters.
        """
        if name in self._registry:
            raise MethodAlreadyRegisteredError(f"Method '{name}' already registered.")
        if not callable(trainer):
            raise TypeError("Trainer must be callable.")
        parameters = list(inspect.signature(trainer).parameters)
        if parameters[:len(TRAINER_PARAMETERS)] != list(TRAINER_PARAMETERS):
            raise TypeError(f"Trainer for '{name}' must accept {', '.join(TRAINER_PARAMETERS)}.")
        self._registry[name] = trainer
        self._logger.debug(f"Registered {name} -> {trainer.__name__}")

    def get(self, name: str) -> Trainer:
        if name not in self._registry:
            known = ", ".join(sorted(self._registry)) or "none"
            raise MethodResolutionError(f"No method registered as '{name}' (known: {known})")
        return self._registry[name]

    def __contains__(self, name: str) -> bool:
        return name in self._registry

    def names(self) -> List[str]:
        return sorted(self._registry)


def default_registry(extra: Optional[Dict[str, Trainer]] = None) -> MethodRegistry:
    registry = MethodRegistry()
    registry.register("bb-psvi", train_bb_psvi)
    registry.register("bb-sparse-incremental", train_bb_sparse_incremental)
    registry.register("bb-sparse-batch", train_bb_sparse_batch)
    registry.register("bb-sparse-prune", train_bb_sparse_prune)
    registry.register("sparse-vi", train_sparse_vi_baseline)
    registry.register("random-coreset", train_random_coreset_baseline)
    registry.register("subset-laplace", train_subset_laplace)
    registry.register("full-mfvi", train_full_mfvi)
    for name, trainer in (extra or {}).items():
        registry.register(name, trainer)
    return registry


method_registry = default_registry()
