"""Central finite-difference checks against reverse-mode gradients."""
from typing import Callable, Dict, Iterable, Tuple
import numpy as np
from .tape import Node, Tape


def finite_difference(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        upper = fn(x)
        flat[i] = original - h
        lower = fn(x)
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * h)
    return grad


def tape_finite_difference(tape: Tape, output: str, bindings: Dict[str, np.ndarray],
                           wrt: Iterable[str], h: float = 1e-6) -> Dict[str, np.ndarray]:
    """Finite differences of a registered output by replaying the tape."""
    results = {}
    for name in wrt:
        def fn(value, name=name):
            rebound = dict(bindings)
            rebound[name] = value
            return float(tape.evaluate(rebound, [output])[output])
        results[name] = finite_difference(fn, bindings[name], h)
    return results


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if np.size(analytic) else 0.0


def check_gradients(build: Callable[[Tape], Node], values: Dict[str, np.ndarray],
                    h: float = 1e-6) -> Dict[str, Tuple[np.ndarray, np.ndarray]]:
    """
    Build a scalar graph over variables named in `values` and compare its
    reverse-mode gradient with central differences.

    Returns:
        name -> (analytic, numeric)
    """
    tape = Tape()
    for name, value in values.items():
        tape.variable(name, value)
    tape.output("loss", build(tape))
    analytic = tape.gradient(tape.outputs["loss"], list(values))
    numeric = tape_finite_difference(tape, "loss", values, list(values), h)
    return {name: (analytic[name], numeric[name]) for name in values}
