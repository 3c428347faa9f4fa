"""
Soft-binning histogram layer with learnable bin centers and widths.

For input channel ``d`` and bin ``b`` every value votes
``exp(-widths[b, d]**2 * (x - centers[b, d])**2)`` and the votes are
averaged over S x T windows. Output channel ``d * B + b`` holds bin ``b``
of input channel ``d``.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import (
    Module,
    Tensor,
    avgpool,
    exp,
    grouped_conv1x1,
    neg,
    parameter,
    reshape,
    square,
    transpose,
)
from .autodiff.tensor import record
from .errors import ShapeError

Window = Optional[Tuple[int, int]]


class HistogramLayer(Module):
    """
    Args:
        in_channels: D, channels of the incoming feature map
        bins: B
        window: (S, T) pooling extent; None pools the whole map
        stride: pooling stride; defaults to the window
        impl: "factored" (conv / RBF / avg-pool pipeline) or "direct"
    """

    def __init__(
        self,
        in_channels: int,
        bins: int = 16,
        window: Window = None,
        stride: Window = None,
        impl: str = "factored",
    ):
        super().__init__()
        if bins < 1:
            raise ValueError(f"bin count must be at least 1, got {bins}")
        if impl not in ("factored", "direct"):
            raise ValueError(f"unknown histogram implementation {impl!r}")
        self.window = window
        self.stride = stride
        self.impl = impl
        centers = np.tile(((np.arange(bins) + 0.5) / bins)[:, None], (1, in_channels))
        self.centers = parameter(centers, name="hist.centers")
        self.widths = parameter(np.full((bins, in_channels), float(bins)), name="hist.widths")

    @property
    def bins(self) -> int:
        return self.centers.shape[0]

    @property
    def in_channels(self) -> int:
        return self.centers.shape[1]

    def pooling(self, x: Tensor) -> Tuple[Tuple[int, int], Tuple[int, int]]:
        h, w = x.shape[-2:]
        window = tuple(self.window) if self.window is not None else (h, w)
        stride = tuple(self.stride) if self.stride is not None else window
        if window[0] > h or window[1] > w:
            raise ShapeError(f"histogram window {window} larger than input {(h, w)}")
        return window, stride

    def forward(self, x: Tensor) -> Tensor:
        if self.impl == "direct":
            return hist_forward_direct(x, self)
        return hist_forward_factored(x, self)


def init_histogram(
    B: int, D: int, rng: Optional[np.random.Generator] = None, **kwargs
) -> HistogramLayer:
    """Deterministic init: centers (b + 0.5) / B, widths B. ``rng`` is accepted and unused."""
    return HistogramLayer(D, bins=B, **kwargs)


def _check_input(x: Tensor, layer: HistogramLayer) -> None:
    if x.ndim != 4 or x.shape[1] != layer.in_channels:
        raise ShapeError(f"histogram layer expects N x {layer.in_channels} x H x W, got {x.shape}")


def hist_forward_factored(x: Tensor, layer: HistogramLayer) -> Tensor:
    """Bin-center conv (unit weights, bias -mu), bin-width conv (gamma), RBF, average pool."""
    _check_input(x, layer)
    window, stride = layer.pooling(x)
    d, b = layer.in_channels, layer.bins
    unit = Tensor(np.ones(d * b, dtype=x.dtype))
    neg_centers = neg(reshape(transpose(layer.centers, (1, 0)), (d * b,)))
    shifted = grouped_conv1x1(x, unit, neg_centers, groups=d)
    widths = reshape(transpose(layer.widths, (1, 0)), (d * b,))
    scaled = grouped_conv1x1(shifted, widths, None, groups=d * b)
    return avgpool(exp(neg(square(scaled))), window, stride)


def _kernel(xv: np.ndarray, mu: np.ndarray, gamma: np.ndarray):
    """diff and RBF votes, both N x D x B x H x W; mu and gamma are B x D."""
    diff = xv[:, :, None] - mu.T[None, :, :, None, None]
    g2 = (gamma.T ** 2)[None, :, :, None, None]
    return diff, np.exp(-g2 * diff * diff)


def hist_forward_direct(x: Tensor, layer: HistogramLayer) -> Tensor:
    """Soft-binning evaluated in one step, with an analytic backward."""
    _check_input(x, layer)
    window, stride = layer.pooling(x)
    n, d, h, w = x.shape
    b = layer.bins
    _, k = _kernel(x.values, layer.centers.values, layer.widths.values)
    win = sliding_window_view(k, window, axis=(-2, -1))[..., :: stride[0], :: stride[1], :, :]
    pooled = win.mean(axis=(-2, -1), dtype=np.float64).astype(x.dtype)
    out = pooled.reshape(n, d * b, *pooled.shape[-2:])

    def back(g):
        return hist_backward(g, x.values, layer, window, stride)

    return record("histogram", (x, layer.centers, layer.widths), out, back)


def hist_backward(
    grad_y: np.ndarray,
    xv: np.ndarray,
    layer: HistogramLayer,
    window: Tuple[int, int],
    stride: Tuple[int, int],
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gradients of the pooled votes with respect to the input, centers and widths.

    Per pixel, with k = exp(-gamma**2 (x - mu)**2):
        dk/dmu    =  2 gamma**2 (x - mu) k
        dk/dgamma = -2 gamma (x - mu)**2 k
        dk/dx     = -dk/dmu
    """
    n, d, h, w = xv.shape
    b = layer.bins
    s, t = window
    sh, sw = stride
    gamma = layer.widths.values
    diff, k = _kernel(xv, layer.centers.values, gamma)

    gy = grad_y.reshape(n, d, b, *grad_y.shape[-2:]) / (s * t)
    r, c = gy.shape[-2:]
    gk = np.zeros_like(k)
    for i in range(s):
        for j in range(t):
            gk[..., i : i + sh * (r - 1) + 1 : sh, j : j + sw * (c - 1) + 1 : sw] += gy

    g2 = (gamma.T ** 2)[None, :, :, None, None]
    dmu = gk * 2.0 * g2 * diff * k
    gx = -dmu.sum(axis=2)
    gmu = dmu.sum(axis=(0, 3, 4)).T
    ggamma = (gk * -2.0 * gamma.T[None, :, :, None, None] * diff * diff * k).sum(axis=(0, 3, 4)).T
    return gx, gmu, ggamma


def as_votes(y: np.ndarray, bins: int) -> np.ndarray:
    """N x (D*B) x R x C layer output -> N x R x C x B x D vote tensor."""
    n, db, r, c = y.shape
    if db % bins:
        raise ShapeError(f"{db} channels is not a multiple of {bins} bins")
    return y.reshape(n, db // bins, bins, r, c).transpose(0, 3, 4, 2, 1)
