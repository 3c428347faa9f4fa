"""Passive-sonar vessel classification with TDNN and histogram-layer TDNN models."""

__version__ = "0.1.0"

from .config import FeatureConfig, ModelConfig, RunConfig, SynthSpec, load_config
from .histogram import HistogramLayer, init_histogram
from .logger import RunLogger
from .models import HLTDNN, TDNN, build_hltdnn, build_tdnn
from .training import evaluate, run_experiment, train
from .types import (
    AudioSignal,
    DatasetManifest,
    ExperimentSummary,
    FeatureKind,
    HyperParams,
    MetricsReport,
    ModelKind,
    PartitionSpec,
    RunResult,
    Segment,
    TimeFrequencyFeature,
)

__all__ = [
    "AudioSignal",
    "DatasetManifest",
    "ExperimentSummary",
    "FeatureConfig",
    "FeatureKind",
    "HLTDNN",
    "HistogramLayer",
    "HyperParams",
    "MetricsReport",
    "ModelConfig",
    "ModelKind",
    "PartitionSpec",
    "RunConfig",
    "RunLogger",
    "RunResult",
    "Segment",
    "SynthSpec",
    "TDNN",
    "TimeFrequencyFeature",
    "build_hltdnn",
    "build_tdnn",
    "evaluate",
    "init_histogram",
    "load_config",
    "run_experiment",
    "train",
]
