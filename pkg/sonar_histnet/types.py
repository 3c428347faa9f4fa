"""Type definitions for sonar-histnet."""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

CLASS_NAMES: Tuple[str, str, str, str] = ("cargo", "passengership", "tanker", "tug")
NUM_CLASSES = len(CLASS_NAMES)
SEGMENT_RATE = 16000


class _Record(BaseModel):
    """Serializable record; log-FDR may legitimately be -inf."""

    model_config = ConfigDict(ser_json_inf_nan="constants")


class _ArrayRecord(BaseModel):
    """In-memory record carrying numpy buffers."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class FeatureKind(str, Enum):
    MS = "ms"
    MFCC = "mfcc"
    STFT = "stft"
    GFCC = "gfcc"
    CQT = "cqt"
    VQT = "vqt"

    @property
    def code(self) -> int:
        """One-byte tag used by the feature cache."""
        return list(FeatureKind).index(self)

    @classmethod
    def from_code(cls, code: int) -> "FeatureKind":
        kinds = list(cls)
        if not 0 <= code < len(kinds):
            raise ValueError(f"unknown feature kind code {code}")
        return kinds[code]


class ModelKind(str, Enum):
    TDNN = "tdnn"
    HLTDNN = "hltdnn"


# --------------------------------------------------------------------------
# Audio
# --------------------------------------------------------------------------


class AudioSignal(_ArrayRecord):
    """A labeled mono waveform."""

    record_id: str
    samples: np.ndarray
    sample_rate: int = Field(gt=0)
    label: int = Field(ge=0, le=NUM_CLASSES - 1)

    @field_validator("samples")
    @classmethod
    def _check_samples(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("samples must be a non-empty 1-D array")
        return v

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


class Segment(_ArrayRecord):
    """A fixed-length window cut from an AudioSignal."""

    record_id: str
    index: int = Field(ge=0)
    samples: np.ndarray
    label: int = Field(ge=0, le=NUM_CLASSES - 1)

    @field_validator("samples")
    @classmethod
    def _check_samples(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError("segment samples must be 1-D")
        return v

    @property
    def segment_id(self) -> str:
        return f"{self.record_id}_{self.index:04d}"


class TimeFrequencyFeature(_ArrayRecord):
    """An F x T time-frequency matrix.

    ``valid_freq`` x ``valid_time`` is the extent of real data in the
    top-left corner; everything outside it is zero padding.
    """

    kind: FeatureKind
    data: np.ndarray
    valid_freq: int = Field(ge=1)
    valid_time: int = Field(ge=1)
    normalized: bool = False

    @field_validator("data")
    @classmethod
    def _check_data(cls, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float32)
        if v.ndim != 2:
            raise ValueError(f"feature data must be 2-D, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("feature data contains NaN or Inf")
        return v

    @model_validator(mode="after")
    def _check_extent(self) -> "TimeFrequencyFeature":
        if self.valid_freq > self.data.shape[0] or self.valid_time > self.data.shape[1]:
            raise ValueError(
                f"valid extent {(self.valid_freq, self.valid_time)} exceeds data shape {self.data.shape}"
            )
        return self

    @property
    def freq_bins(self) -> int:
        return self.data.shape[0]

    @property
    def time_frames(self) -> int:
        return self.data.shape[1]

    def valid(self) -> np.ndarray:
        """View of the unpadded region."""
        return self.data[: self.valid_freq, : self.valid_time]


# --------------------------------------------------------------------------
# Dataset bookkeeping
# --------------------------------------------------------------------------


class ManifestEntry(_Record):
    record_id: str
    path: str
    label: int = Field(ge=0, le=NUM_CLASSES - 1)
    duration_s: float = Field(ge=0)


class DatasetManifest(_Record):
    """The set of recordings a run works on."""

    model_config = ConfigDict(frozen=True)

    entries: List[ManifestEntry]
    class_names: Tuple[str, str, str, str] = CLASS_NAMES

    @field_validator("entries")
    @classmethod
    def _unique_ids(cls, v: List[ManifestEntry]) -> List[ManifestEntry]:
        seen = set()
        for entry in v:
            if entry.record_id in seen:
                raise ValueError(f"duplicate record_id '{entry.record_id}'")
            seen.add(entry.record_id)
        return v

    def by_id(self) -> Dict[str, ManifestEntry]:
        return {e.record_id: e for e in self.entries}

    def class_counts(self) -> List[int]:
        counts = [0] * NUM_CLASSES
        for e in self.entries:
            counts[e.label] += 1
        return counts


class PartitionSpec(_Record):
    """Signal-level train/val/test split."""

    model_config = ConfigDict(frozen=True)

    seed: int
    train: List[str]
    val: List[str]
    test: List[str]

    @model_validator(mode="after")
    def _disjoint(self) -> "PartitionSpec":
        train, val, test = set(self.train), set(self.val), set(self.test)
        overlap = (train & val) | (train & test) | (val & test)
        if overlap:
            raise ValueError(f"record_ids in more than one partition: {sorted(overlap)}")
        return self

    def membership(self, record_id: str) -> str:
        for name in ("train", "val", "test"):
            if record_id in getattr(self, name):
                return name
        raise KeyError(record_id)

    def save(self, path: Path) -> None:
        Path(path).write_text(self.model_dump_json(indent=2))

    @classmethod
    def load(cls, path: Path) -> "PartitionSpec":
        return cls.model_validate_json(Path(path).read_text())


class FeatureStats(_Record):
    """Global z-score statistics for one feature kind."""

    kind: FeatureKind
    mean: float
    std: float
    count: int = Field(ge=1)


# --------------------------------------------------------------------------
# Training and evaluation
# --------------------------------------------------------------------------


class HyperParams(_Record):
    model_config = ConfigDict(extra="forbid")

    lr: float = Field(0.001, gt=0)
    batch: int = Field(128, gt=0)
    epochs: int = Field(100, gt=0)
    patience: int = Field(10, gt=0)
    dropout: float = Field(0.5, ge=0, lt=1)
    bins: int = Field(16, gt=0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    min_delta: float = Field(1e-6, ge=0)
    early_stopping: bool = True

    @model_validator(mode="after")
    def _patience_fits(self) -> "HyperParams":
        if self.patience > self.epochs:
            raise ValueError(f"patience ({self.patience}) must not exceed epochs ({self.epochs})")
        return self


class EpochRecord(_Record):
    """One row of curves.csv."""

    epoch: int = Field(ge=1)
    train_loss: float
    val_loss: float


class MetricsReport(_Record):
    """Every scalar the evaluation reports, plus the confusion matrix."""

    accuracy: float = Field(ge=0, le=1)
    precision: float = Field(ge=0, le=1)
    recall: float = Field(ge=0, le=1)
    f1: float = Field(ge=0, le=1)
    mcc: float = Field(ge=-1, le=1)
    per_class_precision: List[float]
    per_class_recall: List[float]
    per_class_f1: List[float]
    # natural log of the Fisher ratio; None when a class has < 2 samples
    per_class_fdr: List[Optional[float]]
    overall_fdr: Optional[float] = None
    compact_classes: List[int] = Field(default_factory=list)
    confusion: List[List[int]]


class RunResult(_Record):
    seed: int
    best_epoch: int
    stopped_epoch: int
    train_loss: List[float]
    val_loss: List[float]
    test: MetricsReport
    checkpoint: str


class MetricStat(_Record):
    mean: float
    std: float


class ExperimentSummary(_Record):
    """Mean and population standard deviation across seeds."""

    model: ModelKind
    feature: FeatureKind
    seeds: List[int]
    completed: List[int]
    failed: Dict[int, str] = Field(default_factory=dict)
    metrics: Dict[str, MetricStat]
    per_class_fdr: List[MetricStat]
    mean_confusion: List[List[float]]
