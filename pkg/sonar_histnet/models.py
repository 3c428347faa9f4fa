"""TDNN and histogram-augmented TDNN classifiers."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .autodiff import (
    Module,
    Tensor,
    concat,
    conv1d,
    conv2d,
    dropout,
    flatten,
    global_avg_pool,
    linear,
    maxpool_time,
    parameter,
    relu,
    sigmoid,
)
from .config import ModelConfig
from .errors import ShapeError
from .histogram import HistogramLayer
from .types import ModelKind


def kaiming_uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    """Uniform in +-sqrt(6 / fan_in), float32."""
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Conv2d(Module):
    """
    Same-padded square-kernel 2-D convolution, stride 1.

    Args:
        in_channels: input feature maps
        out_channels: output feature maps
        kernel: odd kernel side
        rng: source of the Kaiming-uniform weights; biases start at zero
    """

    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        fan_in = in_channels * kernel * kernel
        self.weight = parameter(kaiming_uniform(rng, (out_channels, in_channels, kernel, kernel), fan_in))
        self.bias = parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, padding="same")


class Conv1d(Module):
    """Same-padded 1-D convolution over the last (time) axis; N x Cin x T to N x Cout x T."""

    def __init__(self, in_channels: int, out_channels: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.weight = parameter(kaiming_uniform(rng, (out_channels, in_channels, kernel), in_channels * kernel))
        self.bias = parameter(np.zeros(out_channels))

    def forward(self, x: Tensor) -> Tensor:
        return conv1d(x, self.weight, self.bias, padding="same")


class Linear(Module):
    """
    Fully connected layer, ``x @ W.T + b``.

    Args:
        in_features: input width
        out_features: output width
        rng: source of the Kaiming-uniform weights
    """

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        self.weight = parameter(kaiming_uniform(rng, (out_features, in_features), in_features))
        self.bias = parameter(np.zeros(out_features))

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)


class Block(Module):
    """conv2d (same) -> ReLU -> max pool 1 x L along time."""

    def __init__(self, in_channels: int, out_channels: int, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.pool_L = cfg.pool_L
        self.conv = Conv2d(in_channels, out_channels, cfg.conv_kernel, rng)

    def forward(self, x: Tensor) -> Tensor:
        return maxpool_time(relu(self.conv(x)), self.pool_L)


class Head(Module):
    """Flatten channels x freq, k=1 conv1d to E, sigmoid, average over time."""

    def __init__(self, in_channels: int, embed_dim: int, rng: np.random.Generator):
        super().__init__()
        self.conv1d = Conv1d(in_channels, embed_dim, 1, rng)

    def forward(self, x: Tensor) -> Tensor:
        return global_avg_pool(sigmoid(self.conv1d(flatten(x, 1, 2))), axis=-1)


class TDNN(Module):
    """Four convolutional blocks, embedding head, dropout and a linear classifier."""

    kind = ModelKind.TDNN

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        channels = (1,) + tuple(cfg.block_channels)
        for i in range(len(cfg.block_channels)):
            setattr(self, f"block{i + 1}", Block(channels[i], channels[i + 1], cfg, rng))
        self.head = Head(cfg.block_channels[-1] * cfg.in_freq, cfg.embed_dim, rng)
        self._build_extra(rng)
        self.classifier = Linear(self.embed_dim, cfg.num_classes, rng)
        self.rng = rng

    def _build_extra(self, rng: np.random.Generator) -> None:
        pass

    @property
    def embed_dim(self) -> int:
        return self.cfg.embed_dim

    def trunk(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1:] != (1, self.cfg.in_freq, self.cfg.in_time):
            raise ShapeError(
                f"expected N x 1 x {self.cfg.in_freq} x {self.cfg.in_time} input, got {x.shape}"
            )
        for i in range(len(self.cfg.block_channels)):
            x = getattr(self, f"block{i + 1}")(x)
        return x

    def features(self, x: Tensor) -> Tensor:
        """Penultimate representation: the input to dropout + classifier."""
        return self.head(self.trunk(x))

    def forward(self, x: Tensor, rng: Optional[np.random.Generator] = None) -> Tensor:
        z = dropout(self.features(x), self.cfg.dropout_p, self.training, rng if rng is not None else self.rng)
        return self.classifier(z)


class HLTDNN(TDNN):
    """TDNN plus a histogram branch on the block-4 map, concatenated to the embedding."""

    kind = ModelKind.HLTDNN

    def _build_extra(self, rng: np.random.Generator) -> None:
        cfg = self.cfg
        self.hist = HistogramLayer(
            cfg.block_channels[-1],
            bins=cfg.bins,
            window=cfg.hist_window,
            stride=cfg.hist_stride,
            impl=cfg.hist_impl,
        )

    @property
    def embed_dim(self) -> int:
        return self.cfg.embed_dim + self.cfg.hist_descriptor_size

    def histogram_descriptor(self, x: Tensor) -> Tensor:
        return flatten(self.hist(self.trunk(x)), 1)

    def features(self, x: Tensor) -> Tensor:
        z = self.trunk(x)
        return concat([self.head(z), flatten(self.hist(z), 1)], axis=1)


def build_tdnn(cfg: ModelConfig, rng: np.random.Generator) -> TDNN:
    """
    Baseline time-delay network.

    Args:
        cfg: layer sizes
        rng: weight initializer; the same seed gives the same weights

    Returns:
        A TDNN in training mode
    """
    return TDNN(cfg, rng)


def build_hltdnn(cfg: ModelConfig, rng: np.random.Generator) -> HLTDNN:
    """
    TDNN with a histogram branch on the last block.

    Histogram centres and widths use the deterministic init, so only the
    convolutional and linear weights depend on ``rng``.

    Returns:
        An HLTDNN in training mode
    """
    return HLTDNN(cfg, rng)


def build_model(kind: ModelKind, cfg: ModelConfig, rng: np.random.Generator) -> TDNN:
    """Dispatch on ``kind``."""
    return build_hltdnn(cfg, rng) if ModelKind(kind) is ModelKind.HLTDNN else build_tdnn(cfg, rng)


def forward(
    model: TDNN, batch: np.ndarray, training: bool = False, rng: Optional[np.random.Generator] = None
) -> Tensor:
    """Logits N x num_classes for an N x 1 x F x T batch."""
    model.train(training)
    return model(batch if isinstance(batch, Tensor) else Tensor(batch), rng=rng)


def embed(model: TDNN, batch: np.ndarray) -> np.ndarray:
    """Eval-mode penultimate features, N x embed_dim."""
    model.eval()
    x = batch if isinstance(batch, Tensor) else Tensor(batch)
    return model.features(x).values
