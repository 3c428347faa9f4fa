"""Differentiable operators over :class:`Tensor`."""

from __future__ import annotations

from typing import Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, record

IntPair = Union[int, Tuple[int, int]]


def _pair(v: IntPair) -> Tuple[int, int]:
    return (v, v) if isinstance(v, int) else (int(v[0]), int(v[1]))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise


def relu(x: Tensor) -> Tensor:
    mask = x.values > 0
    return record("relu", (x,), x.values * mask, lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    from scipy.special import expit

    y = expit(x.values).astype(x.dtype, copy=False)
    return record("sigmoid", (x,), y, lambda g: (g * y * (1 - y),))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.values)
    return record("exp", (x,), y, lambda g: (g * y,))


def square(x: Tensor) -> Tensor:
    xv = x.values
    return record("square", (x,), xv * xv, lambda g: (2 * g * xv,))


def neg(x: Tensor) -> Tensor:
    return record("neg", (x,), -x.values, lambda g: (-g,))


def sub_broadcast(x: Tensor, y: Tensor) -> Tensor:
    def back(g):
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return record("sub", (x, y), x.values - y.values, back)


def mul_broadcast(x: Tensor, y: Tensor) -> Tensor:
    xv, yv = x.values, y.values

    def back(g):
        return _unbroadcast(g * yv, x.shape), _unbroadcast(g * xv, y.shape)

    return record("mul", (x, y), xv * yv, back)


# shape


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    src = x.shape
    return record("reshape", (x,), x.values.reshape(tuple(shape)), lambda g: (g.reshape(src),))


def flatten(x: Tensor, start_dim: int = 1, end_dim: int = -1) -> Tensor:
    """Merge dims ``start_dim..end_dim`` (inclusive) into one."""
    shape = x.shape
    end = end_dim % len(shape)
    merged = int(np.prod(shape[start_dim : end + 1]))
    return reshape(x, shape[:start_dim] + (merged,) + shape[end + 1 :])


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record("transpose", (x,), np.transpose(x.values, axes), lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    tensors = tuple(tensors)
    if not tensors:
        raise ShapeError("concat of zero tensors")
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis % len(ref)):
            raise ShapeError(f"concat: shapes {ref} and {t.shape} differ off axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    values = np.concatenate([t.values for t in tensors], axis=axis)
    return record("concat", tensors, values, lambda g: tuple(np.split(g, splits, axis=axis)))


# convolution


def _im2col(xv: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """N x Cin x H x W (already padded) -> N x H' x W' x Cin x kh x kw view."""
    win = sliding_window_view(xv, (kh, kw), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: str = "same") -> Tensor:
    """
    2-D cross-correlation, stride 1.

    Args:
        x: N x Cin x H x W
        weight: Cout x Cin x kh x kw
        bias: Cout
        padding: "same" (odd kernels, zero pad) or "valid"
    """
    if x.ndim != 4 or weight.ndim != 4:
        raise ShapeError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, cin, h, w = x.shape
    cout, wcin, kh, kw = weight.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same padding needs odd kernel sizes")
        ph, pw = kh // 2, kw // 2
    elif padding == "valid":
        ph = pw = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")

    xp = np.pad(x.values, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, kh, kw)
    wv = weight.values
    out = np.tensordot(cols, wv, axes=([3, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.values.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out)
    ho, wo = out.shape[2], out.shape[3]

    def back(g):
        # g: N x Cout x Ho x Wo
        gw = np.tensordot(g, cols, axes=([0, 2, 3], [0, 1, 2]))
        gx_p = np.zeros_like(xp)
        gcols = np.tensordot(g, wv, axes=([1], [0]))  # N x Ho x Wo x Cin x kh x kw
        for i in range(kh):
            for j in range(kw):
                gx_p[:, :, i : i + ho, j : j + wo] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        gx = gx_p[:, :, ph : ph + h, pw : pw + w]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("conv2d", inputs, out, back)


def conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, padding: str = "same") -> Tensor:
    """x: N x Cin x T, weight: Cout x Cin x k."""
    if x.ndim != 3 or weight.ndim != 3:
        raise ShapeError(f"conv1d expects 3-D input and weight, got {x.shape} and {weight.shape}")
    n, cin, t = x.shape
    cout, wcin, k = weight.shape
    x4 = reshape(x, (n, cin, 1, t))
    w4 = reshape(weight, (cout, wcin, 1, k))
    y = conv2d(x4, w4, bias, padding=padding)
    return reshape(y, (n, cout, y.shape[3]))


def grouped_conv1x1(x: Tensor, weight: Tensor, bias: Optional[Tensor], groups: int) -> Tensor:
    """
    Grouped 1x1 convolution with one input channel per group.

    Each of the ``groups`` input channels fans out to ``Cout / groups``
    outputs, output channel ``c*k + j`` reading input channel ``c``.
    ``weight`` and ``bias`` hold one scalar per output channel.
    """
    n, cin = x.shape[:2]
    if cin != groups:
        raise ShapeError(f"grouped_conv1x1: {cin} input channels, {groups} groups")
    cout = weight.size
    if cout % groups:
        raise ShapeError(f"grouped_conv1x1: {cout} outputs not divisible by {groups} groups")
    k = cout // groups
    rest = x.shape[2:]
    bshape = (1, cout) + (1,) * len(rest)
    xr = np.repeat(x.values, k, axis=1)
    wv = weight.values.reshape(bshape)
    out = xr * wv
    if bias is not None:
        out = out + bias.values.reshape(bshape)
    red = (0,) + tuple(range(2, x.ndim))

    def back(g):
        gx = (g * wv).reshape((n, cin, k) + rest).sum(axis=2)
        gw = (g * xr).sum(axis=red).reshape(weight.shape)
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=red).reshape(bias.shape))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("grouped_conv1x1", inputs, out, back)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x: N x in, weight: out x in."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear: input {x.shape} does not match weight {weight.shape}")
    xv, wv = x.values, weight.values
    out = xv @ wv.T
    if bias is not None:
        out = out + bias.values

    def back(g):
        grads = [g @ wv, g.T @ xv]
        if bias is not None:
            grads.append(g.sum(axis=0))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return record("linear", inputs, out, back)


# pooling


def maxpool_time(x: Tensor, L: int) -> Tensor:
    """Non-overlapping max pool of width ``L`` along the last axis; the tail remainder is dropped."""
    w = x.shape[-1]
    if w < L:
        raise ShapeError(f"maxpool_time: time extent {w} is smaller than pool width {L}")
    wo = w // L
    lead = x.shape[:-1]
    xr = x.values[..., : wo * L].reshape(lead + (wo, L))
    idx = xr.argmax(axis=-1)[..., None]
    out = np.take_along_axis(xr, idx, axis=-1)[..., 0]

    def back(g):
        gr = np.zeros_like(xr)
        np.put_along_axis(gr, idx, g[..., None], axis=-1)
        gx = np.zeros_like(x.values)
        gx[..., : wo * L] = gr.reshape(lead + (wo * L,))
        return (gx,)

    return record("maxpool_time", (x,), out, back)


def avgpool(x: Tensor, kernel: IntPair, stride: Optional[IntPair] = None) -> Tensor:
    """
    Average pool over the last two axes.

    Output extent per axis is ``floor((size - kernel) / stride) + 1``.
    Sums accumulate in float64.
    """
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride) if stride is not None else (kh, kw)
    h, w = x.shape[-2:]
    if kh > h or kw > w:
        raise ShapeError(f"avgpool: kernel {(kh, kw)} larger than input {(h, w)}")
    win = sliding_window_view(x.values, (kh, kw), axis=(-2, -1))[..., ::sh, ::sw, :, :]
    out = win.mean(axis=(-2, -1), dtype=np.float64).astype(x.dtype)
    ho, wo = out.shape[-2:]

    def back(g):
        gs = g / (kh * kw)
        gx = np.zeros_like(x.values)
        for i in range(kh):
            for j in range(kw):
                gx[..., i : i + sh * (ho - 1) + 1 : sh, j : j + sw * (wo - 1) + 1 : sw] += gs
        return (gx,)

    return record("avgpool", (x,), out, back)


def global_avg_pool(x: Tensor, axis: int = -1) -> Tensor:
    """Mean over one axis (float64 accumulation); the axis is removed."""
    axis = axis % x.ndim
    n = x.shape[axis]
    out = x.values.mean(axis=axis, dtype=np.float64).astype(x.dtype)

    def back(g):
        return (np.broadcast_to(np.expand_dims(g / n, axis), x.shape).copy(),)

    return record("global_avg_pool", (x,), out, back)


# regularization and loss


def dropout(x: Tensor, p: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    rng = rng if rng is not None else np.random.default_rng()
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return record("dropout", (x,), x.values * mask, lambda g: (g * mask,))


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of N x C logits against integer labels."""
    from scipy.special import logsumexp, softmax

    if logits.ndim != 2:
        raise ShapeError(f"logits must be N x C, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    n, c = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c}), got range [{labels.min()}, {labels.max()}]")
    z = logits.values.astype(np.float64)
    lse = logsumexp(z, axis=1)
    loss = np.mean(lse - z[np.arange(n), labels])

    def back(g):
        p = softmax(z, axis=1)
        p[np.arange(n), labels] -= 1.0
        return ((p * (g / n)).astype(logits.dtype),)

    return record("softmax_cross_entropy", (logits,), np.asarray(loss, dtype=logits.dtype), back)
