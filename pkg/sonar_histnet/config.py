"""Configuration models and loading."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, model_validator

from .errors import ConfigError, MissingStageError
from .types import FeatureKind, HyperParams, ModelKind

THREADS_ENV = "SONAR_HISTNET_THREADS"
STAGES = ("synth", "ingest", "extract", "train", "evaluate", "report")

_DEFAULT_PAD_FREQ = {
    FeatureKind.MS: 48,
    FeatureKind.MFCC: 16,
    FeatureKind.STFT: 48,
    FeatureKind.GFCC: 64,
    FeatureKind.CQT: 64,
    FeatureKind.VQT: 64,
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class FeatureConfig(_Section):
    """Time-frequency extraction parameters."""

    sample_rate: int = Field(16000, gt=0)
    segment_s: float = Field(3.0, gt=0)
    window_ms: float = Field(250.0, gt=0)
    hop_ms: float = Field(64.0, gt=0)
    n_mels: int = Field(40, gt=0)
    n_mfcc: int = Field(16, gt=0)
    stft_bins: int = Field(48, gt=0)
    gfcc_bins: int = Field(64, gt=0)
    cqt_bins: int = Field(64, gt=0)
    vqt_bins: int = Field(64, gt=0)
    pad_time: int = Field(48, gt=0)
    pad_freq: Dict[FeatureKind, int] = Field(default_factory=lambda: dict(_DEFAULT_PAD_FREQ))
    db_floor: float = Field(-80.0, lt=0)
    cqt_fmin: float = Field(32.70, gt=0)
    bins_per_octave: int = Field(12, gt=0)
    vqt_gamma: float = Field(4.66, ge=0)
    gfcc_fmin: float = Field(50.0, gt=0)
    gammatone_taps: int = Field(2048, gt=0)

    @property
    def window_samples(self) -> int:
        return int(round(self.window_ms * self.sample_rate / 1000.0))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate / 1000.0))

    @property
    def segment_samples(self) -> int:
        return int(round(self.segment_s * self.sample_rate))

    @property
    def raw_frames(self) -> int:
        return self.segment_samples // self.hop_samples + 1

    def raw_freq(self, kind: FeatureKind) -> int:
        return {
            FeatureKind.MS: self.n_mels,
            FeatureKind.MFCC: self.n_mfcc,
            FeatureKind.STFT: self.stft_bins,
            FeatureKind.GFCC: self.gfcc_bins,
            FeatureKind.CQT: self.cqt_bins,
            FeatureKind.VQT: self.vqt_bins,
        }[FeatureKind(kind)]

    def padded_shape(self, kind: FeatureKind) -> Tuple[int, int]:
        return self.pad_freq[FeatureKind(kind)], self.pad_time

    @model_validator(mode="after")
    def _pads_cover_raw(self) -> "FeatureConfig":
        if self.pad_time < self.raw_frames:
            raise ValueError(f"pad_time {self.pad_time} < raw frame count {self.raw_frames}")
        for kind in FeatureKind:
            if kind not in self.pad_freq:
                raise ValueError(f"pad_freq missing an entry for '{kind.value}'")
            if self.pad_freq[kind] < self.raw_freq(kind):
                raise ValueError(
                    f"pad_freq[{kind.value}]={self.pad_freq[kind]} < raw bins {self.raw_freq(kind)}"
                )
        return self


class ModelConfig(_Section):
    """Layer sizes shared by TDNN and HLTDNN."""

    block_channels: Tuple[int, int, int, int] = (16, 32, 64, 128)
    conv_kernel: int = Field(3, gt=0)
    pool_L: int = Field(2, ge=1)
    embed_dim: int = Field(128, gt=0)
    num_classes: int = Field(4, gt=1)
    bins: int = Field(16, ge=1)
    dropout_p: float = Field(0.5, ge=0, lt=1)
    in_freq: int = Field(48, gt=0)
    in_time: int = Field(48, gt=0)
    # None means global pooling over the whole block-4 map
    hist_window: Optional[Tuple[int, int]] = None
    hist_stride: Optional[Tuple[int, int]] = None
    hist_impl: Literal["factored", "direct"] = "factored"

    @property
    def pooled_time(self) -> int:
        return self.in_time // (self.pool_L ** len(self.block_channels))

    @model_validator(mode="after")
    def _check(self) -> "ModelConfig":
        if self.conv_kernel % 2 == 0:
            raise ValueError(f"conv_kernel must be odd for same padding, got {self.conv_kernel}")
        if self.pooled_time < 1:
            raise ValueError(
                f"in_time {self.in_time} pooled by {self.pool_L} over "
                f"{len(self.block_channels)} blocks leaves no time frames"
            )
        if self.hist_window is not None:
            s, t = self.hist_window
            if s > self.in_freq or t > self.pooled_time:
                raise ValueError(
                    f"hist_window {self.hist_window} exceeds the block-4 map "
                    f"({self.in_freq}, {self.pooled_time})"
                )
        return self

    @property
    def hist_grid(self) -> Tuple[int, int]:
        """(R, C) extent of the pooled histogram maps."""
        if self.hist_window is None:
            return 1, 1
        s, t = self.hist_window
        sh, sw = self.hist_stride or self.hist_window
        return (self.in_freq - s) // sh + 1, (self.pooled_time - t) // sw + 1

    @property
    def hist_descriptor_size(self) -> int:
        r, c = self.hist_grid
        return self.bins * self.block_channels[-1] * r * c


class SynthSpec(_Section):
    """Recipe for the four-class synthetic corpus."""

    n_signals_per_class: int = Field(40, ge=1)
    signal_duration_s: float = Field(30.0, gt=0)
    seed: int = 0
    sample_rate: int = Field(16000, gt=0)
    rms: float = Field(0.1, gt=0)
    tone_a_hz: float = 400.0
    tone_b_hz: float = 900.0
    n_harmonics: int = Field(3, ge=1)
    tone_to_noise_db: float = 10.0
    shaping_band_hz: Tuple[float, float] = (1000.0, 6000.0)
    shaping_order: int = Field(2, ge=1)
    envelope_block_s: float = Field(0.25, gt=0)
    probe: bool = True


class RunConfig(_Section):
    """Everything a pipeline invocation needs."""

    data_dir: str = "data"
    cache_dir: str = "cache"
    output_dir: str = "runs"
    features: List[FeatureKind] = Field(default_factory=lambda: [FeatureKind.STFT], min_length=1)
    models: List[ModelKind] = Field(
        default_factory=lambda: [ModelKind.TDNN, ModelKind.HLTDNN], min_length=1
    )
    hp: HyperParams = Field(default_factory=HyperParams)
    partition_seed: int = 0
    ratios: Tuple[float, float, float] = (0.70, 0.15, 0.15)
    fdr_aggregate: Literal["sum", "mean", "pooled"] = "sum"
    feature: FeatureConfig = Field(default_factory=FeatureConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    synth: SynthSpec = Field(default_factory=SynthSpec)

    @property
    def manifest_path(self) -> Path:
        return Path(self.data_dir) / "manifest.csv"

    def stage_inputs(self, stage: str) -> List[Tuple[str, Path]]:
        """
        Paths a stage reads, each paired with the stage that writes it.

        Args:
            stage: one of ``STAGES``

        Returns:
            (producing stage, path) pairs; empty for ``synth``
        """
        cache = Path(self.cache_dir)
        if stage == "ingest":
            return [("synth", self.manifest_path)]
        if stage == "extract":
            return [("ingest", cache / "segments.csv")]
        if stage in ("train", "evaluate"):
            return [("extract", cache / "features" / k.value / "index.csv") for k in self.features]
        if stage == "report":
            return [("train", Path(self.output_dir))]
        return []

    @model_validator(mode="after")
    def _paths_exist(self, info: ValidationInfo) -> "RunConfig":
        for name in ("data_dir", "cache_dir", "output_dir"):
            path = Path(getattr(self, name))
            if path.exists() and not path.is_dir():
                raise ValueError(f"{name} '{path}' is not a directory")
        stage = (info.context or {}).get("stage")
        if stage is not None:
            if stage not in STAGES:
                raise ValueError(f"unknown stage '{stage}'")
            for producer, path in self.stage_inputs(stage):
                if not path.exists():
                    raise MissingStageError(producer, f"{stage} needs {path}")
        return self


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Mapping[str, str]) -> Dict[str, Any]:
    """Set dotted keys (``hp.lr``) in a nested dict, parsing JSON values."""
    for dotted, raw in overrides.items():
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if not isinstance(child, dict):
                child = {}
                node[part] = child
            node = child
        node[parts[-1]] = _parse_value(raw) if isinstance(raw, str) else raw
    return data


def _describe(err: ValidationError) -> str:
    lines = []
    for item in err.errors():
        key = ".".join(str(p) for p in item["loc"])
        if item["type"] == "extra_forbidden":
            lines.append(f"unknown config key '{key}'")
        else:
            lines.append(f"{key}: {item['msg']}")
    return "; ".join(lines)


def load_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, str]] = None,
    stage: Optional[str] = None,
) -> RunConfig:
    """
    Resolve a RunConfig from an optional JSON file plus dotted overrides.

    Raises:
        ConfigError: unreadable file, bad JSON, unknown key or invalid value
        MissingStageError: ``stage`` is given and one of its inputs is absent
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config file {path} must hold a JSON object")
    if overrides:
        data = apply_overrides(data, overrides)
    try:
        return RunConfig.model_validate(data, context={"stage": stage})
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e


def worker_count(default: Optional[int] = None) -> int:
    """Thread cap from SONAR_HISTNET_THREADS, else the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got '{raw}'")
        if n < 1:
            raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
        return n
    return default or os.cpu_count() or 1
