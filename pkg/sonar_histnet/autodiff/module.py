"""Parameter containers."""

from __future__ import annotations

from typing import Dict, Iterator, Mapping, Tuple

import numpy as np

from ..errors import CheckpointError
from .tensor import Tensor


def parameter(values: np.ndarray, name: str = None) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float32), requires_grad=True, name=name)


class Module:
    """
    Base class for layers and models.

    Trainable tensors and child modules assigned as attributes are
    registered in assignment order; ``named_parameters`` yields dotted
    names such as ``block1.conv.weight``.
    """

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> Dict[str, Tensor]:
        return dict(self.named_parameters())

    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        """Cast every parameter in place (float64 is used for gradient checks)."""
        for _, p in self.named_parameters():
            p.values = p.values.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.values.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(f"parameter names differ: missing={missing} unexpected={unexpected}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise CheckpointError(f"{name}: checkpoint shape {arr.shape}, model shape {p.shape}")
            p.values = arr.astype(p.dtype, copy=True)
