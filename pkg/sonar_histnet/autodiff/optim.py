"""Adagrad."""

from __future__ import annotations

from typing import Dict, Mapping, Optional

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor

DEFAULT_LR = 1e-3
DEFAULT_EPS = 1e-10


class AdagradState:
    """Per-parameter squared-gradient accumulators."""

    def __init__(self, lr: float = DEFAULT_LR, eps: float = DEFAULT_EPS):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        self.lr = lr
        self.eps = eps
        self.accumulators: Dict[str, np.ndarray] = {}

    def accumulator(self, name: str, like: np.ndarray) -> np.ndarray:
        acc = self.accumulators.get(name)
        if acc is None:
            acc = self.accumulators[name] = np.zeros_like(like)
        elif acc.shape != like.shape:
            raise ShapeError(f"{name}: accumulator shape {acc.shape} does not match {like.shape}")
        return acc


def adagrad_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, Optional[np.ndarray]],
    state: AdagradState,
) -> None:
    """G += g**2; theta -= lr * g / (sqrt(G) + eps). Parameters without a gradient are skipped."""
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"{name}: gradient shape {g.shape} does not match parameter {p.shape}")
        acc = state.accumulator(name, p.values)
        acc += g * g
        p.values -= (state.lr * g / (np.sqrt(acc) + state.eps)).astype(p.dtype, copy=False)


class Adagrad:
    """Optimizer bound to a fixed parameter set."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = DEFAULT_LR, eps: float = DEFAULT_EPS):
        self.params = dict(params)
        self.state = AdagradState(lr=lr, eps=eps)

    def step(self) -> None:
        adagrad_step(self.params, {n: p.grad for n, p in self.params.items()}, self.state)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: acc.copy() for name, acc in self.state.accumulators.items()}

    def load_state_dict(self, accumulators: Mapping[str, np.ndarray]) -> None:
        for name, acc in accumulators.items():
            if name not in self.params:
                raise ShapeError(f"accumulator for unknown parameter {name!r}")
            if acc.shape != self.params[name].shape:
                raise ShapeError(f"{name}: accumulator shape {acc.shape} does not match parameter")
        self.state.accumulators = {n: np.array(a, dtype=self.params[n].dtype) for n, a in accumulators.items()}
