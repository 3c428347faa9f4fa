"""Gammatone filterbank and GFCC."""

from __future__ import annotations

import numpy as np
from scipy.signal import fftconvolve

from ..config import FeatureConfig
from ..types import FeatureKind, TimeFrequencyFeature
from ._framing import SegmentLike, center_pad, pad_feature, samples_of
from .spectral import LOG_FLOOR, cepstrum

ORDER = 4
BANDWIDTH_SCALE = 1.019


def erb(f):
    """Equivalent rectangular bandwidth in Hz (Glasberg & Moore)."""
    return 24.7 * (4.37e-3 * np.asarray(f, dtype=np.float64) + 1.0)


def _erb_rate(f):
    return 21.4 * np.log10(1.0 + 4.37e-3 * np.asarray(f, dtype=np.float64))


def _erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e) / 21.4) - 1.0) / 4.37e-3


def erb_space(fmin: float, fmax: float, n: int) -> np.ndarray:
    """``n`` center frequencies equally spaced on the ERB-rate scale."""
    cf = _erb_rate_to_hz(np.linspace(_erb_rate(fmin), _erb_rate(fmax), n))
    cf[0] = fmin
    return np.minimum(cf, fmax)


def gammatone_bank(cfg: FeatureConfig) -> np.ndarray:
    """4th-order gammatone impulse responses, unit gain at each center frequency."""
    cf = erb_space(cfg.gfcc_fmin, cfg.sample_rate / 2.0, cfg.gfcc_bins)[:, None]
    t = np.arange(cfg.gammatone_taps) / cfg.sample_rate
    b = 2.0 * np.pi * BANDWIDTH_SCALE * erb(cf)
    ir = t ** (ORDER - 1) * np.exp(-b * t) * np.cos(2.0 * np.pi * cf * t)
    gain = np.abs(np.sum(ir * np.exp(-2j * np.pi * cf * t), axis=1, keepdims=True))
    return ir / gain


def gammatone_energies(segment: SegmentLike, cfg: FeatureConfig) -> np.ndarray:
    """Per-frame channel energies, shape gfcc_bins x T."""
    x = samples_of(segment, cfg)
    win, hop = cfg.window_samples, cfg.hop_samples
    padded = center_pad(x, win // 2)
    filtered = fftconvolve(padded[None, :], gammatone_bank(cfg), axes=1)[:, : padded.size]
    csum = np.concatenate(
        [np.zeros((filtered.shape[0], 1)), np.cumsum(filtered ** 2, axis=1)], axis=1
    )
    starts = np.arange(x.size // hop + 1) * hop
    energies = csum[:, starts + win] - csum[:, starts]
    return np.maximum(energies, 0.0)


def gfcc(segment: SegmentLike, cfg: FeatureConfig) -> TimeFrequencyFeature:
    """Gammatone cepstral coefficients: DCT of the log ERB-spaced channel energies."""
    log_e = np.log(np.maximum(gammatone_energies(segment, cfg), LOG_FLOOR))
    return pad_feature(cepstrum(log_e, cfg.gfcc_bins), FeatureKind.GFCC, cfg)
