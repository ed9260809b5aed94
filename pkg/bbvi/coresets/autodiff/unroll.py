from typing import Any, Callable, List, Sequence, Tuple
from .tape import Node


def unrolled_gradient(inner_step: Callable[[Any, int], Any], carry: Any, steps: int,
                      outer_loss: Callable[[Any], Node], wrt: Sequence[Node],
                      create_graph: bool = False) -> Tuple[Node, Any, List[Node]]:
    """
    Differentiate an outer loss through `steps` recorded inner updates.

    `inner_step(carry, t)` must build its update from tape primitives (for a
    gradient-based update, take the inner gradient with `create_graph=True`).
    The whole trajectory stays on the tape and is swept once, so the returned
    gradients with respect to `wrt` include every path through the inner
    updates. With `steps == 0` this is the plain gradient of the outer loss.

    Returns:
        (outer loss node, final carry, gradients aligned with `wrt`)
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if not wrt:
        raise ValueError("wrt must name at least one node")
    tape = wrt[0].tape
    for t in range(steps):
        tape.checkpoint(f"inner-{t}")
        carry = inner_step(carry, t)
    tape.checkpoint("outer")
    loss = outer_loss(carry)
    grads = tape.grad(loss, list(wrt), create_graph=create_graph)
    return loss, carry, grads
