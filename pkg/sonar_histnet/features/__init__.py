"""Time-frequency feature extractors."""

from typing import Callable, Dict

from ..config import FeatureConfig
from ..types import FeatureKind, TimeFrequencyFeature
from ._framing import SegmentLike, frame
from .cache import read_feature, write_feature
from .constant_q import cqt, vqt
from .gammatone import gfcc
from .normalize import compute_stats, normalize
from .spectral import mel_spectrogram, mfcc, stft

EXTRACTORS: Dict[FeatureKind, Callable[[SegmentLike, FeatureConfig], TimeFrequencyFeature]] = {
    FeatureKind.MS: mel_spectrogram,
    FeatureKind.MFCC: mfcc,
    FeatureKind.STFT: stft,
    FeatureKind.GFCC: gfcc,
    FeatureKind.CQT: cqt,
    FeatureKind.VQT: vqt,
}


def extract(segment: SegmentLike, kind: FeatureKind, cfg: FeatureConfig) -> TimeFrequencyFeature:
    """Compute one padded, un-normalized feature of the given kind."""
    return EXTRACTORS[FeatureKind(kind)](segment, cfg)


__all__ = [
    "EXTRACTORS",
    "extract",
    "frame",
    "stft",
    "mel_spectrogram",
    "mfcc",
    "gfcc",
    "cqt",
    "vqt",
    "compute_stats",
    "normalize",
    "read_feature",
    "write_feature",
]
