"""Train-set z-score statistics."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import FeatureError
from ..types import FeatureKind, FeatureStats, TimeFrequencyFeature

STD_FLOOR = 1e-6


def compute_stats(features: Iterable[TimeFrequencyFeature]) -> FeatureStats:
    """
    Global mean and population std over the valid region of every feature.

    One pass; per-feature moments are merged with the pairwise update so
    the running sums stay in float64 without cancellation.
    """
    kind = None
    count, mean, m2 = 0, 0.0, 0.0
    for feat in features:
        if kind is None:
            kind = feat.kind
        elif feat.kind != kind:
            raise FeatureError(f"mixed feature kinds: {kind.value} and {feat.kind.value}")
        block = feat.valid().astype(np.float64).ravel()
        n_b = block.size
        mean_b = block.mean()
        m2_b = np.sum((block - mean_b) ** 2)
        delta = mean_b - mean
        total = count + n_b
        mean += delta * n_b / total
        m2 += m2_b + delta * delta * count * n_b / total
        count = total
    if kind is None:
        raise FeatureError("cannot compute statistics of an empty feature set")
    return FeatureStats(kind=kind, mean=float(mean), std=float(np.sqrt(m2 / count)), count=count)


def normalize(feature: TimeFrequencyFeature, stats: FeatureStats) -> TimeFrequencyFeature:
    """Z-score the valid region; padding stays exactly zero."""
    if FeatureKind(stats.kind) != feature.kind:
        raise FeatureError(
            f"statistics are for '{FeatureKind(stats.kind).value}', feature is '{feature.kind.value}'"
        )
    std = max(stats.std, STD_FLOOR)
    data = np.zeros_like(feature.data)
    f, t = feature.valid_freq, feature.valid_time
    data[:f, :t] = (feature.valid().astype(np.float64) - stats.mean) / std
    return TimeFrequencyFeature(
        kind=feature.kind, data=data, valid_freq=f, valid_time=t, normalized=True
    )
