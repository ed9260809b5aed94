import logging
from contextlib import contextmanager
from typing import Any, Dict, Iterable, List, Optional, Sequence, Union
import numpy as np
from ..exceptions import NonFiniteError, NotOnTapeError, NotScalarError, ShapeError, UnboundVariableError


logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int]


def as_array(value: ArrayLike) -> np.ndarray:
    array = np.array(value, dtype=np.float64)
    array.setflags(write=False)
    return array


class Node:
    """
    A value recorded on a tape.

    Nodes are created by `Tape.variable`, `Tape.constant` and by the
    primitives in `autodiff.ops`. A node never changes after creation;
    replaying a tape with new bindings computes fresh values without
    touching the recorded ones.
    """

    __slots__ = ("tape", "op", "parents", "attrs", "value", "index", "requires_grad", "name")

    __array_priority__ = 100

    def __init__(self, tape: "Tape", value: np.ndarray, op=None, parents: Sequence["Node"] = (),
                 attrs: Optional[dict] = None, requires_grad: bool = False, name: Optional[str] = None):
        self.tape = tape
        self.value = value
        self.op = op
        self.parents = tuple(parents)
        self.attrs = attrs or {}
        self.requires_grad = requires_grad
        self.name = name
        self.index = -1

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    @property
    def size(self) -> int:
        return self.value.size

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float(self.value)

    def __repr__(self) -> str:
        kind = self.op.name if self.op is not None else ("variable" if self.name else "constant")
        return f"Node({kind}, shape={self.shape})"

    # arithmetic resolves against the primitives module at call time
    def __add__(self, other):
        return ops.add(self, other)

    def __radd__(self, other):
        return ops.add(other, self)

    def __sub__(self, other):
        return ops.sub(self, other)

    def __rsub__(self, other):
        return ops.sub(other, self)

    def __mul__(self, other):
        return ops.mul(self, other)

    def __rmul__(self, other):
        return ops.mul(other, self)

    def __truediv__(self, other):
        return ops.div(self, other)

    def __rtruediv__(self, other):
        return ops.div(other, self)

    def __neg__(self):
        return ops.negate(self)

    def __matmul__(self, other):
        return ops.matmul(self, other)

    def __rmatmul__(self, other):
        return ops.matmul(other, self)

    def __pow__(self, exponent):
        if exponent == 2:
            return ops.square(self)
        if exponent == 0.5:
            return ops.sqrt(self)
        if exponent == -1:
            return ops.reciprocal(self)
        raise NotImplementedError(f"Only powers 2, 0.5 and -1 are supported, got {exponent}")

    def __getitem__(self, index):
        return ops.getitem(self, index)

    @property
    def T(self):
        return ops.swap_last(self)


class Tape:
    """
    An ordered record of nodes.

    Nodes are appended in creation order, so every node appears after all of
    its parents. Variables are registered by name and can be rebound when the
    tape is replayed with `evaluate`. A reverse sweep with `create_graph=True`
    records its own operations on the same tape, which is what lets a loss be
    differentiated through an unrolled sequence of gradient-based updates.
    """

    def __init__(self):
        self.nodes: List[Node] = []
        self.variables: Dict[str, Node] = {}
        self.outputs: Dict[str, Node] = {}
        self.checkpoints: List[tuple] = []
        self._recording = True

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def is_recording(self) -> bool:
        return self._recording

    @contextmanager
    def no_record(self):
        """Compute values without appending nodes to the tape."""
        previous = self._recording
        self._recording = False
        try:
            yield self
        finally:
            self._recording = previous

    # --- Node creation ---

    def _append(self, node: Node) -> Node:
        node.index = len(self.nodes)
        self.nodes.append(node)
        return node

    def variable(self, name: str, value: ArrayLike) -> Node:
        if name in self.variables:
            raise ValueError(f"Variable '{name}' already registered on this tape.")
        array = as_array(value)
        if not np.all(np.isfinite(array)):
            raise NonFiniteError(f"Variable '{name}' has non-finite entries.")
        node = Node(self, array, requires_grad=True, name=name)
        self.variables[name] = node
        return self._append(node)

    def constant(self, value: ArrayLike) -> Node:
        node = Node(self, as_array(value))
        if self._recording:
            self._append(node)
        return node

    def lift(self, value: Any) -> Node:
        if isinstance(value, Node):
            if value.tape is not self:
                raise NotOnTapeError("Cannot combine nodes from different tapes.")
            return value
        return self.constant(value)

    def record(self, op, parents: Sequence[Node], attrs: dict, value: np.ndarray) -> Node:
        value = np.asarray(value, dtype=np.float64)
        value.setflags(write=False)
        if not self._recording:
            return Node(self, value)
        requires_grad = any(parent.requires_grad for parent in parents)
        node = Node(self, value, op=op, parents=parents, attrs=attrs, requires_grad=requires_grad)
        return self._append(node)

    def checkpoint(self, label: str) -> int:
        """Mark the current end of the tape, e.g. the start of an inner step."""
        position = len(self.nodes)
        self.checkpoints.append((label, position))
        return position

    def output(self, name: str, node: Node) -> Node:
        if node.tape is not self or node.index < 0:
            raise NotOnTapeError(f"Output '{name}' is not recorded on this tape.")
        self.outputs[name] = node
        return node

    # --- Forward replay ---

    def evaluate(self, bindings: Dict[str, ArrayLike], outputs: Optional[Iterable[str]] = None) -> Dict[str, np.ndarray]:
        """
        Replay the recorded forward computation with new variable values.

        Args:
            bindings: variable name -> array; every registered variable must be bound.
            outputs: names registered with `output`; defaults to all of them.

        Returns:
            name -> forward value of each requested output.
        """
        names = list(outputs) if outputs is not None else list(self.outputs)
        for name in names:
            if name not in self.outputs:
                raise NotOnTapeError(f"Unknown output '{name}'.")

        for name, variable in self.variables.items():
            if name not in bindings:
                raise UnboundVariableError(f"Variable '{name}' is not bound.")
            bound = np.asarray(bindings[name], dtype=np.float64)
            if bound.shape != variable.shape:
                raise ShapeError(f"Variable '{name}' expects shape {variable.shape}, got {bound.shape}.")
            if not np.all(np.isfinite(bound)):
                raise NonFiniteError(f"Variable '{name}' bound to non-finite values.")

        last = max((self.outputs[name].index for name in names), default=-1)
        values: Dict[int, np.ndarray] = {}
        for node in self.nodes[:last + 1]:
            if node.op is None:
                if node.name is not None and node.name in self.variables:
                    values[node.index] = np.asarray(bindings[node.name], dtype=np.float64)
                else:
                    values[node.index] = node.value
                continue
            parent_values = [values[p.index] if p.index >= 0 else p.value for p in node.parents]
            values[node.index] = node.op.forward(*parent_values, **node.attrs)
        return {name: np.asarray(values[self.outputs[name].index]) for name in names}

    # --- Reverse sweep ---

    def grad(self, output: Node, wrt: Sequence[Node], create_graph: bool = False) -> List[Node]:
        """
        Reverse-mode gradients of a scalar output with respect to recorded nodes.

        With `create_graph=True` the sweep is itself recorded so the returned
        gradient nodes can be differentiated again.
        """
        if output.tape is not self or output.index < 0:
            raise NotOnTapeError("Output is not recorded on this tape.")
        if output.size != 1:
            raise NotScalarError(f"Gradient needs a scalar output, got shape {output.shape}.")
        for node in wrt:
            if not isinstance(node, Node) or node.tape is not self or node.index < 0:
                raise NotOnTapeError(f"{node!r} is not recorded on this tape.")

        stop = min((node.index for node in wrt), default=output.index)
        adjoints: Dict[int, Node] = {}

        recording = self._recording and create_graph
        previous = self._recording
        self._recording = recording
        try:
            adjoints[output.index] = self.constant(np.ones(output.shape))
            for node in reversed(self.nodes[stop:output.index + 1]):
                adjoint = adjoints.get(node.index)
                if adjoint is None or node.op is None or not node.requires_grad:
                    continue
                needs = [parent.requires_grad for parent in node.parents]
                if not any(needs):
                    continue
                parent_grads = node.op.backward(node, adjoint, needs)
                for parent, parent_grad, need in zip(node.parents, parent_grads, needs):
                    if not need or parent_grad is None:
                        continue
                    existing = adjoints.get(parent.index)
                    adjoints[parent.index] = parent_grad if existing is None else ops.add(existing, parent_grad)
            grads = []
            for node in wrt:
                found = adjoints.get(node.index)
                grads.append(found if found is not None else self.constant(np.zeros(node.shape)))
        finally:
            self._recording = previous
        return grads

    def gradient(self, output: Node, wrt: Sequence[Union[str, Node]]) -> Dict[str, np.ndarray]:
        """Gradients as arrays keyed by variable name (or node repr for anonymous nodes)."""
        nodes = [self._resolve(item) for item in wrt]
        grads = self.grad(output, nodes, create_graph=False)
        return {self._key(item, node): np.array(g.value) for item, node, g in zip(wrt, nodes, grads)}

    def _resolve(self, item: Union[str, Node]) -> Node:
        if isinstance(item, Node):
            return item
        if item not in self.variables:
            raise NotOnTapeError(f"Variable '{item}' is not on this tape.")
        return self.variables[item]

    @staticmethod
    def _key(item, node: Node) -> str:
        if isinstance(item, str):
            return item
        return node.name if node.name is not None else f"node{node.index}"


def evaluate(tape: Tape, bindings: Dict[str, ArrayLike], outputs: Optional[Iterable[str]] = None) -> Dict[str, np.ndarray]:
    return tape.evaluate(bindings, outputs)


def gradient(tape: Tape, output: Node, wrt: Sequence[Union[str, Node]]) -> Dict[str, np.ndarray]:
    return tape.gradient(output, wrt)


from . import ops  # noqa: E402
