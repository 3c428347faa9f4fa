"""Constant-Q and variable-Q transforms with explicit per-bin kernels."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..config import FeatureConfig
from ..errors import FeatureError
from ..types import FeatureKind, TimeFrequencyFeature
from ._framing import SegmentLike, hann, pad_feature, samples_of, to_db


def q_factor(bins_per_octave: int) -> float:
    """Quality factor of a filter one bin wide at the given resolution."""
    return 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)


def cqt_frequencies(cfg: FeatureConfig, n_bins: int) -> np.ndarray:
    return cfg.cqt_fmin * 2.0 ** (np.arange(n_bins) / cfg.bins_per_octave)


def bandwidths(cfg: FeatureConfig, n_bins: int, gamma: float) -> np.ndarray:
    """B_k = f_k / Q + gamma; gamma = 0 is the constant-Q case."""
    return cqt_frequencies(cfg, n_bins) / q_factor(cfg.bins_per_octave) + gamma


def effective_q(cfg: FeatureConfig, n_bins: int, gamma: float) -> np.ndarray:
    return cqt_frequencies(cfg, n_bins) / bandwidths(cfg, n_bins, gamma)


def variable_q_magnitudes(
    segment: SegmentLike, cfg: FeatureConfig, n_bins: int, gamma: float
) -> np.ndarray:
    """
    Direct (naive-kernel) variable-Q magnitudes, shape n_bins x T.

    Each bin correlates frames of length ceil(sr / B_k), centered on the
    hop grid, with a Hann-windowed complex exponential normalized to
    unit window sum.

    Raises:
        FeatureError: top bin at or above Nyquist
    """
    x = samples_of(segment, cfg)
    sr = cfg.sample_rate
    freqs = cqt_frequencies(cfg, n_bins)
    if freqs[-1] >= sr / 2.0:
        raise FeatureError(f"top bin {freqs[-1]:.1f} Hz is not below Nyquist {sr / 2.0:.1f} Hz")
    lengths = np.ceil(sr / bandwidths(cfg, n_bins, gamma)).astype(int)
    half = int(lengths.max()) // 2 + 1
    if half >= x.size:
        raise FeatureError(f"longest kernel ({lengths.max()} samples) exceeds the segment")
    padded = np.pad(x, half, mode="reflect")
    centers = half + np.arange(x.size // cfg.hop_samples + 1) * cfg.hop_samples

    out = np.empty((n_bins, centers.size))
    for k, (f, n) in enumerate(zip(freqs, lengths)):
        window = hann(int(n))
        kernel = window * np.exp(-2j * np.pi * f * np.arange(n) / sr) / window.sum()
        frames = sliding_window_view(padded, int(n))[centers - n // 2]
        out[k] = np.abs(frames @ kernel)
    return out


def cqt(segment: SegmentLike, cfg: FeatureConfig) -> TimeFrequencyFeature:
    """
    Constant-Q magnitudes in dB, ``cqt_bins`` bins from ``cqt_fmin``.

    Raises:
        FeatureError: top bin at or above Nyquist, or a kernel longer than the segment
    """
    mag = variable_q_magnitudes(segment, cfg, cfg.cqt_bins, 0.0)
    return pad_feature(to_db(mag, cfg), FeatureKind.CQT, cfg)


def vqt(segment: SegmentLike, cfg: FeatureConfig) -> TimeFrequencyFeature:
    """Variable-Q counterpart of :func:`cqt`; bandwidths grow by ``vqt_gamma`` Hz."""
    mag = variable_q_magnitudes(segment, cfg, cfg.vqt_bins, cfg.vqt_gamma)
    return pad_feature(to_db(mag, cfg), FeatureKind.VQT, cfg)
