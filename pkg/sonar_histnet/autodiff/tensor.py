"""Tensors and the define-by-run recording tape."""

from __future__ import annotations

import os
import threading
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import NumericalError, ShapeError

DEBUG_ENV = "SONAR_HISTNET_DEBUG"

_local = threading.local()
_debug = os.environ.get(DEBUG_ENV) == "1"

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


def set_debug(flag: bool) -> None:
    """Toggle NaN/Inf checks on every recorded value and gradient."""
    global _debug
    _debug = bool(flag)


def _check_finite(op: str, arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalError(f"{op}: non-finite {what}")


class Tensor:
    """An n-dimensional array that can take part in a recorded computation."""

    __slots__ = ("values", "grad", "requires_grad", "node", "name")

    def __init__(self, values, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(values)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float32)
        self.values: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.node: Optional[Node] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self):
        return self.values.dtype

    def numpy(self) -> np.ndarray:
        return self.values

    def item(self) -> float:
        return float(self.values.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label}, requires_grad={self.requires_grad})"


class Node:
    """One recorded operation."""

    __slots__ = ("op", "inputs", "output", "backward_fn", "tape")

    def __init__(self, op: str, inputs: Tuple[Tensor, ...], output: Tensor, backward_fn: BackwardFn, tape: "Tape"):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.tape = tape


class Tape:
    """
    Ordered record of operations.

    Usage:
        with Tape() as tape:
            loss = softmax_cross_entropy(model(x), y)
        tape.backward(loss)
    """

    def __init__(self):
        self.nodes: List[Node] = []

    def __enter__(self) -> "Tape":
        stack = getattr(_local, "stack", None)
        if stack is None:
            stack = _local.stack = []
        stack.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _local.stack.pop()

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable requires_grad tensor."""
        if loss.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss.node is None or loss.node.tape is not self:
            raise ValueError("loss was not recorded on this tape")

        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}
        reached: Dict[int, Tensor] = {id(loss): loss}
        for node in reversed(self.nodes):
            g = grads.get(id(node.output))
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward_fn(g)):
                if gi is None or not t.requires_grad:
                    continue
                if _debug:
                    _check_finite(node.op, gi, "gradient")
                key = id(t)
                grads[key] = gi if key not in grads else grads[key] + gi
                reached[key] = t

        for key, t in reached.items():
            g = grads[key].astype(t.dtype, copy=False).reshape(t.shape)
            if t.node is None and t.grad is not None:
                t.grad = t.grad + g
            else:
                t.grad = g


def active_tape() -> Optional[Tape]:
    stack = getattr(_local, "stack", None)
    return stack[-1] if stack else None


def record(op: str, inputs: Sequence[Tensor], values: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    """Wrap an operator result; attach a tape node when gradients are needed."""
    if _debug:
        _check_finite(op, values, "output")
    tape = active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(values, requires_grad=needs_grad)
    if needs_grad:
        node = Node(op, tuple(inputs), out, backward_fn, tape)
        out.node = node
        tape.nodes.append(node)
    return out


def backward(loss: Tensor) -> None:
    if loss.node is None:
        raise ValueError("loss has no recorded history; compute it inside a Tape context")
    loss.node.tape.backward(loss)
