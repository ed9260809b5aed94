"""
Differentiable primitives.

Each primitive is an `Op` with a numpy forward and a backward written in
terms of other primitives, so a recorded reverse sweep is differentiable
again. All values are float64.
"""
from abc import ABC, abstractmethod
from typing import Optional, Sequence, Tuple
import numpy as np
from scipy import special
from ..exceptions import DegenerateWeightsError, ShapeError
from .tape import Node, Tape


class Op(ABC):
    name: str = "op"

    @staticmethod
    @abstractmethod
    def forward(*values, **attrs) -> np.ndarray:
        pass

    @abstractmethod
    def backward(self, node: Node, grad: Node, needs: Sequence[bool]) -> Tuple[Optional[Node], ...]:
        pass

    def __repr__(self) -> str:
        return f"<{self.name}>"


def _tape_of(args) -> Tape:
    for arg in args:
        if isinstance(arg, Node):
            return arg.tape
    raise TypeError("At least one argument must be a Node.")


def apply(op: Op, *args, **attrs) -> Node:
    tape = _tape_of(args)
    parents = [tape.lift(arg) for arg in args]
    try:
        value = op.forward(*[parent.value for parent in parents], **attrs)
    except ValueError as exc:
        shapes = ", ".join(str(parent.shape) for parent in parents)
        raise ShapeError(f"{op.name} cannot combine shapes {shapes}: {exc}") from exc
    return tape.record(op, parents, attrs, value)


def _kept_shape(shape: tuple, axis) -> tuple:
    if axis is None:
        return (1,) * len(shape)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = {a % len(shape) for a in axes}
    return tuple(1 if i in axes else n for i, n in enumerate(shape))


# --- shape plumbing ---

class SumTo(Op):
    name = "sum_to"

    @staticmethod
    def forward(x, shape):
        lead = x.ndim - len(shape)
        axes = tuple(range(lead)) + tuple(lead + i for i, n in enumerate(shape) if n == 1 and x.shape[lead + i] != 1)
        return np.sum(x, axis=axes, keepdims=True).reshape(shape) if axes else x.reshape(shape)

    def backward(self, node, grad, needs):
        return (broadcast_to(grad, node.parents[0].shape),)


class BroadcastTo(Op):
    name = "broadcast_to"

    @staticmethod
    def forward(x, shape):
        return np.broadcast_to(x, shape)

    def backward(self, node, grad, needs):
        return (sum_to(grad, node.parents[0].shape),)


class Reshape(Op):
    name = "reshape"

    @staticmethod
    def forward(x, shape):
        return np.reshape(x, shape)

    def backward(self, node, grad, needs):
        return (reshape(grad, node.parents[0].shape),)


class SwapLast(Op):
    name = "swap_last"

    @staticmethod
    def forward(x):
        if x.ndim < 2:
            raise ValueError("needs at least two dimensions")
        return np.swapaxes(x, -1, -2)

    def backward(self, node, grad, needs):
        return (swap_last(grad),)


class GetItem(Op):
    name = "slice"

    @staticmethod
    def forward(x, index):
        return x[index]

    def backward(self, node, grad, needs):
        return (scatter(grad, node.attrs["index"], node.parents[0].shape),)


class Scatter(Op):
    name = "scatter"

    @staticmethod
    def forward(x, index, shape):
        out = np.zeros(shape)
        np.add.at(out, index, x)
        return out

    def backward(self, node, grad, needs):
        return (getitem(grad, node.attrs["index"]),)


class Concat(Op):
    name = "concat"

    @staticmethod
    def forward(*xs, axis):
        return np.concatenate(xs, axis=axis)

    def backward(self, node, grad, needs):
        axis = node.attrs["axis"] % node.ndim
        grads, offset = [], 0
        for parent, need in zip(node.parents, needs):
            width = parent.shape[axis]
            if need:
                index = (slice(None),) * axis + (slice(offset, offset + width),)
                grads.append(getitem(grad, index))
            else:
                grads.append(None)
            offset += width
        return tuple(grads)


# --- arithmetic ---

class Add(Op):
    name = "add"

    @staticmethod
    def forward(a, b):
        return a + b

    def backward(self, node, grad, needs):
        a, b = node.parents
        return (sum_to(grad, a.shape) if needs[0] else None,
                sum_to(grad, b.shape) if needs[1] else None)


class Sub(Op):
    name = "sub"

    @staticmethod
    def forward(a, b):
        return a - b

    def backward(self, node, grad, needs):
        a, b = node.parents
        return (sum_to(grad, a.shape) if needs[0] else None,
                sum_to(negate(grad), b.shape) if needs[1] else None)


class Mul(Op):
    name = "mul"

    @staticmethod
    def forward(a, b):
        return a * b

    def backward(self, node, grad, needs):
        a, b = node.parents
        return (sum_to(mul(grad, b), a.shape) if needs[0] else None,
                sum_to(mul(grad, a), b.shape) if needs[1] else None)


class Div(Op):
    name = "div"

    @staticmethod
    def forward(a, b):
        return a / b

    def backward(self, node, grad, needs):
        a, b = node.parents
        return (sum_to(div(grad, b), a.shape) if needs[0] else None,
                sum_to(negate(div(mul(grad, node), b)), b.shape) if needs[1] else None)


class MatMul(Op):
    name = "matmul"

    @staticmethod
    def forward(a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ValueError("matmul operands need at least two dimensions")
        return np.matmul(a, b)

    def backward(self, node, grad, needs):
        a, b = node.parents
        return (sum_to(matmul(grad, swap_last(b)), a.shape) if needs[0] else None,
                sum_to(matmul(swap_last(a), grad), b.shape) if needs[1] else None)


# --- elementwise ---

class Negate(Op):
    name = "negate"

    @staticmethod
    def forward(x):
        return -x

    def backward(self, node, grad, needs):
        return (negate(grad),)


class Exp(Op):
    name = "exp"

    @staticmethod
    def forward(x):
        return np.exp(x)

    def backward(self, node, grad, needs):
        return (mul(grad, node),)


class Log(Op):
    name = "log"

    @staticmethod
    def forward(x):
        with np.errstate(divide="ignore"):
            return np.log(x)

    def backward(self, node, grad, needs):
        return (div(grad, node.parents[0]),)


class Tanh(Op):
    name = "tanh"

    @staticmethod
    def forward(x):
        return np.tanh(x)

    def backward(self, node, grad, needs):
        return (mul(grad, sub(1.0, square(node))),)


class Relu(Op):
    name = "relu"

    @staticmethod
    def forward(x):
        return np.maximum(x, 0.0)

    def backward(self, node, grad, needs):
        # second derivative is zero everywhere, including at 0
        mask = node.tape.constant((node.parents[0].value > 0).astype(np.float64))
        return (mul(grad, mask),)


class LogSigmoid(Op):
    name = "log_sigmoid"

    @staticmethod
    def forward(x):
        return -np.logaddexp(0.0, -x)

    def backward(self, node, grad, needs):
        return (mul(grad, exp(log_sigmoid(negate(node.parents[0])))),)


class Square(Op):
    name = "square"

    @staticmethod
    def forward(x):
        return x * x

    def backward(self, node, grad, needs):
        return (mul(grad, mul(2.0, node.parents[0])),)


class Sqrt(Op):
    name = "sqrt"

    @staticmethod
    def forward(x):
        return np.sqrt(x)

    def backward(self, node, grad, needs):
        # derivative taken as 0 where the root is exactly 0
        positive = (node.value > 0).astype(np.float64)
        mask = node.tape.constant(positive)
        pad = node.tape.constant(1.0 - positive)
        return (mul(mul(grad, 0.5), div(mask, add(node, pad))),)


class Reciprocal(Op):
    name = "reciprocal"

    @staticmethod
    def forward(x):
        with np.errstate(divide="ignore"):
            return 1.0 / x

    def backward(self, node, grad, needs):
        return (negate(mul(grad, square(node))),)


# --- reductions ---

class Sum(Op):
    name = "sum"

    @staticmethod
    def forward(x, axis, keepdims):
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(self, node, grad, needs):
        x = node.parents[0]
        kept = reshape(grad, _kept_shape(x.shape, node.attrs["axis"]))
        return (broadcast_to(kept, x.shape),)


class LogSumExp(Op):
    name = "logsumexp"

    @staticmethod
    def forward(x, axis, keepdims):
        if np.any(np.all(np.isneginf(x), axis=axis)):
            raise DegenerateWeightsError("log-sum-exp over an all -inf slice")
        return special.logsumexp(x, axis=axis, keepdims=keepdims)

    def backward(self, node, grad, needs):
        x = node.parents[0]
        shape = _kept_shape(x.shape, node.attrs["axis"])
        softmax = exp(sub(x, reshape(node, shape)))
        return (mul(reshape(grad, shape), softmax),)


class Max(Op):
    name = "max"

    @staticmethod
    def forward(x, axis, keepdims):
        return np.max(x, axis=axis, keepdims=keepdims)

    def backward(self, node, grad, needs):
        x = node.parents[0]
        axis = node.attrs["axis"]
        shape = _kept_shape(x.shape, axis)
        if axis is None:
            mask = np.zeros(x.size)
            mask[np.argmax(x.value)] = 1.0
            mask = mask.reshape(x.shape)
        else:
            first = np.expand_dims(np.argmax(x.value, axis=axis), axis)
            mask = np.zeros(x.shape)
            np.put_along_axis(mask, first, 1.0, axis=axis)
        return (mul(reshape(grad, shape), node.tape.constant(mask)),)


class LogSoftmax(Op):
    name = "log_softmax"

    @staticmethod
    def forward(x, axis):
        return special.log_softmax(x, axis=axis)

    def backward(self, node, grad, needs):
        axis = node.attrs["axis"]
        total = sum_(grad, axis=axis, keepdims=True)
        return (sub(grad, mul(exp(node), total)),)


# --- functional interface ---

_SUM_TO, _BROADCAST, _RESHAPE, _SWAP = SumTo(), BroadcastTo(), Reshape(), SwapLast()
_GETITEM, _SCATTER, _CONCAT = GetItem(), Scatter(), Concat()
_ADD, _SUB, _MUL, _DIV, _MATMUL = Add(), Sub(), Mul(), Div(), MatMul()
_NEG, _EXP, _LOG, _TANH, _RELU, _LOGSIG = Negate(), Exp(), Log(), Tanh(), Relu(), LogSigmoid()
_SQUARE, _SQRT, _RECIP = Square(), Sqrt(), Reciprocal()
_SUM, _LSE, _MAX, _LOGSOFTMAX = Sum(), LogSumExp(), Max(), LogSoftmax()


def sum_to(x: Node, shape) -> Node:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    return apply(_SUM_TO, x, shape=shape)


def broadcast_to(x: Node, shape) -> Node:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    return apply(_BROADCAST, x, shape=shape)


def reshape(x: Node, shape) -> Node:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    return apply(_RESHAPE, x, shape=shape)


def swap_last(x: Node) -> Node:
    return apply(_SWAP, x)


def getitem(x: Node, index) -> Node:
    return apply(_GETITEM, x, index=index)


def scatter(x: Node, index, shape) -> Node:
    return apply(_SCATTER, x, index=index, shape=tuple(shape))


def concat(xs: Sequence[Node], axis: int = 0) -> Node:
    if len(xs) == 1:
        return xs[0]
    return apply(_CONCAT, *xs, axis=axis)


def stack(xs: Sequence[Node], axis: int = -1) -> Node:
    expanded = []
    for x in xs:
        position = axis if axis >= 0 else x.ndim + 1 + axis
        expanded.append(reshape(x, x.shape[:position] + (1,) + x.shape[position:]))
    return concat(expanded, axis=axis)


def add(a, b) -> Node:
    return apply(_ADD, a, b)


def sub(a, b) -> Node:
    return apply(_SUB, a, b)


def mul(a, b) -> Node:
    return apply(_MUL, a, b)


def div(a, b) -> Node:
    return apply(_DIV, a, b)


def matmul(a, b) -> Node:
    return apply(_MATMUL, a, b)


def affine(x, weight, bias) -> Node:
    """x @ weight + bias with broadcasting over leading batch dimensions."""
    return add(matmul(x, weight), bias)


def negate(x) -> Node:
    return apply(_NEG, x)


def exp(x) -> Node:
    return apply(_EXP, x)


def log(x) -> Node:
    return apply(_LOG, x)


def tanh(x) -> Node:
    return apply(_TANH, x)


def relu(x) -> Node:
    return apply(_RELU, x)


def log_sigmoid(x) -> Node:
    return apply(_LOGSIG, x)


def square(x) -> Node:
    return apply(_SQUARE, x)


def sqrt(x) -> Node:
    return apply(_SQRT, x)


def reciprocal(x) -> Node:
    return apply(_RECIP, x)


def sum_(x, axis=None, keepdims: bool = False) -> Node:
    return apply(_SUM, x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims: bool = False) -> Node:
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in ((axis,) if isinstance(axis, int) else axis)]))
    return div(sum_(x, axis=axis, keepdims=keepdims), float(count))


def logsumexp(x, axis=None, keepdims: bool = False) -> Node:
    return apply(_LSE, x, axis=axis, keepdims=keepdims)


def max_(x, axis=None, keepdims: bool = False) -> Node:
    return apply(_MAX, x, axis=axis, keepdims=keepdims)


def log_softmax(x, axis: int = -1) -> Node:
    return apply(_LOGSOFTMAX, x, axis=axis)


def softmax(x, axis: int = -1) -> Node:
    return exp(log_softmax(x, axis=axis))


ACTIVATIONS = {"tanh": tanh, "relu": relu}
