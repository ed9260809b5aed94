from .tape import Node, Tape, evaluate, gradient
from .unroll import unrolled_gradient
from . import ops

__all__ = ["Node", "Tape", "evaluate", "gradient", "unrolled_gradient", "ops"]
