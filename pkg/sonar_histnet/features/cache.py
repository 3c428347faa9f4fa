"""Binary feature cache and its CSV index."""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from ..config import FeatureConfig
from ..errors import FeatureError
from ..types import FeatureKind, TimeFrequencyFeature

MAGIC = b"TFF1"
_HEADER = struct.Struct("<4sBIII")
INDEX_HEADER = ("segment_id", "kind", "path", "label", "partition")


class IndexRow(BaseModel):
    """One line of ``index.csv``; ``path`` is relative to the index directory."""

    segment_id: str
    kind: FeatureKind
    path: str
    label: int
    partition: str


def write_feature(path: Path, feature: TimeFrequencyFeature, label: int) -> None:
    """
    Store a padded feature as a ``TFF1`` file.

    Layout: 4-byte magic, kind code (u8), F, T and label (u32 LE), then
    F x T float32 LE in row-major order.
    """
    f, t = feature.data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, feature.kind.code, f, t, label))
        fh.write(feature.data.astype("<f4").tobytes(order="C"))


def read_feature(path: Path, cfg: Optional[FeatureConfig] = None) -> Tuple[TimeFrequencyFeature, int]:
    """
    Load one cached feature and its label.

    The valid (unpadded) extent is not stored; it is recovered from the
    extraction config.
    """
    cfg = cfg or FeatureConfig()
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FeatureError(f"{path}: truncated header")
    magic, code, f, t, label = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FeatureError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 4 * f * t
    if len(raw) != expected:
        raise FeatureError(f"{path}: expected {expected} bytes, found {len(raw)}")
    kind = FeatureKind.from_code(code)
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size).reshape(f, t).astype(np.float32)
    feature = TimeFrequencyFeature(
        kind=kind,
        data=data,
        valid_freq=min(cfg.raw_freq(kind), f),
        valid_time=min(cfg.raw_frames, t),
    )
    return feature, label


def write_index(rows: List[IndexRow], path: Path) -> None:
    """Write rows in the given order under ``INDEX_HEADER``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(INDEX_HEADER)
        for r in rows:
            writer.writerow([r.segment_id, r.kind.value, r.path, r.label, r.partition])


def read_index(path: Path) -> List[IndexRow]:
    """
    Read ``index.csv``.

    Args:
        path: the index file

    Returns:
        Rows in file order, validated into ``IndexRow``
    """
    with open(path, newline="") as fh:
        return [IndexRow.model_validate(row) for row in csv.DictReader(fh)]
