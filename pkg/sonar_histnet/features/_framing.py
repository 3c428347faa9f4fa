"""Framing, dB scaling and padding shared by every extractor."""

from __future__ import annotations

from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from ..config import FeatureConfig
from ..errors import FeatureError
from ..types import FeatureKind, Segment, TimeFrequencyFeature

SegmentLike = Union[Segment, np.ndarray]


def samples_of(segment: SegmentLike, cfg: FeatureConfig) -> np.ndarray:
    x = segment.samples if isinstance(segment, Segment) else np.asarray(segment, dtype=np.float64)
    if x.ndim != 1 or x.size != cfg.segment_samples:
        raise FeatureError(f"expected {cfg.segment_samples} samples, got shape {x.shape}")
    return x


def hann(n: int) -> np.ndarray:
    return get_window("hann", n, fftbins=True)


def center_pad(x: np.ndarray, half: int) -> np.ndarray:
    return np.pad(x, half, mode="reflect")


def frame(segment: SegmentLike, cfg: FeatureConfig, window: bool = True) -> np.ndarray:
    """
    Split a segment into centered frames, one row per frame.

    Frame k covers samples [k*hop - win/2, k*hop + win/2) of the original
    signal, with reflect padding at both ends.
    """
    x = samples_of(segment, cfg)
    win, hop = cfg.window_samples, cfg.hop_samples
    padded = center_pad(x, win // 2)
    count = x.size // hop + 1
    frames = sliding_window_view(padded, win)[::hop][:count]
    if window:
        return frames * hann(win)
    return frames.copy()


def to_db(values: np.ndarray, cfg: FeatureConfig, power: bool = False) -> np.ndarray:
    """
    Log-scale magnitudes (or powers) with a floor of ``db_floor``.

    Values below max + db_floor are clamped, so silence maps to db_floor
    everywhere.
    """
    amin = 10.0 ** (cfg.db_floor / 20.0)
    if power:
        db = 10.0 * np.log10(np.maximum(values, amin * amin))
    else:
        db = 20.0 * np.log10(np.maximum(np.abs(values), amin))
    return np.maximum(db, db.max() + cfg.db_floor)


def pad_feature(matrix: np.ndarray, kind: FeatureKind, cfg: FeatureConfig) -> TimeFrequencyFeature:
    """Zero-pad an F x T matrix up to the configured shape for ``kind``."""
    f_raw, t_raw = matrix.shape
    f_pad, t_pad = cfg.padded_shape(kind)
    if f_raw > f_pad or t_raw > t_pad:
        raise FeatureError(f"{kind.value}: raw shape {matrix.shape} exceeds pad target {(f_pad, t_pad)}")
    data = np.zeros((f_pad, t_pad), dtype=np.float32)
    data[:f_raw, :t_raw] = matrix
    return TimeFrequencyFeature(kind=kind, data=data, valid_freq=f_raw, valid_time=t_raw)
