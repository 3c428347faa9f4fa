"""Fourier-domain features: STFT, mel spectrogram and MFCC."""

from __future__ import annotations

import numpy as np
from scipy.fft import dct, rfft

from ..config import FeatureConfig
from ..types import FeatureKind, TimeFrequencyFeature
from ._framing import SegmentLike, frame, pad_feature, to_db

LOG_FLOOR = 1e-10


def spectrum(segment: SegmentLike, cfg: FeatureConfig) -> np.ndarray:
    """One-sided DFT of every Hann-windowed frame, shape T x (win/2 + 1)."""
    frames = frame(segment, cfg)
    return rfft(frames, n=cfg.window_samples, axis=1)


def band_edges(n_bins: int, n_bands: int) -> np.ndarray:
    """Bin boundaries of ``n_bands`` contiguous, equal-width bands."""
    return np.round(np.linspace(0, n_bins, n_bands + 1)).astype(int)


def stft_magnitudes(segment: SegmentLike, cfg: FeatureConfig) -> np.ndarray:
    """Band-averaged magnitude spectrogram, shape stft_bins x T."""
    mag = np.abs(spectrum(segment, cfg))
    edges = band_edges(mag.shape[1], cfg.stft_bins)
    widths = np.diff(edges)
    sums = np.add.reduceat(mag, edges[:-1], axis=1)
    return (sums / widths).T


def stft(segment: SegmentLike, cfg: FeatureConfig) -> TimeFrequencyFeature:
    """Log-magnitude STFT averaged into ``stft_bins`` linear bands, padded to the model input."""
    return pad_feature(to_db(stft_magnitudes(segment, cfg), cfg), FeatureKind.STFT, cfg)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def _mel_points(cfg: FeatureConfig) -> np.ndarray:
    top = hz_to_mel(cfg.sample_rate / 2.0)
    return mel_to_hz(np.linspace(0.0, top, cfg.n_mels + 2))


def mel_centers(cfg: FeatureConfig) -> np.ndarray:
    """Center frequency in Hz of each mel filter."""
    return _mel_points(cfg)[1:-1]


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """HTK-mel triangular filters over the DFT bins, shape n_mels x (win/2 + 1)."""
    n_fft = cfg.window_samples
    freqs = np.arange(n_fft // 2 + 1) * cfg.sample_rate / n_fft
    pts = _mel_points(cfg)
    lower = (freqs[None, :] - pts[:-2, None]) / (pts[1:-1] - pts[:-2])[:, None]
    upper = (pts[2:, None] - freqs[None, :]) / (pts[2:] - pts[1:-1])[:, None]
    return np.maximum(0.0, np.minimum(lower, upper))


def mel_power(segment: SegmentLike, cfg: FeatureConfig) -> np.ndarray:
    power = np.abs(spectrum(segment, cfg)) ** 2
    return mel_filterbank(cfg) @ power.T


def mel_spectrogram(segment: SegmentLike, cfg: FeatureConfig) -> TimeFrequencyFeature:
    """
    Mel-filtered power spectrogram in dB.

    Args:
        segment: one segment of ``cfg.segment_samples`` samples
        cfg: framing and filterbank parameters

    Returns:
        Feature padded to ``cfg.padded_shape(FeatureKind.MS)``
    """
    return pad_feature(to_db(mel_power(segment, cfg), cfg, power=True), FeatureKind.MS, cfg)


def cepstrum(log_energies: np.ndarray, n_keep: int) -> np.ndarray:
    """Orthonormal DCT-II along axis 0, first ``n_keep`` coefficients."""
    return dct(log_energies, type=2, norm="ortho", axis=0)[:n_keep]


def mfcc(segment: SegmentLike, cfg: FeatureConfig) -> TimeFrequencyFeature:
    log_mel = np.log(np.maximum(mel_power(segment, cfg), LOG_FLOOR))
    return pad_feature(cepstrum(log_mel, cfg.n_mfcc), FeatureKind.MFCC, cfg)
