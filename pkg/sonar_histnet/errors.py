"""Exception hierarchy for sonar-histnet."""


class SonarHistnetError(Exception):
    """Base class for every error raised by this package."""


class AudioDecodeError(SonarHistnetError):
    """A recording could not be read as PCM WAV."""


class PartitionError(SonarHistnetError, ValueError):
    """A manifest cannot be split into train/val/test as requested."""


class FeatureError(SonarHistnetError, ValueError):
    """Feature extraction, normalization or cache I/O failed."""


class ShapeError(SonarHistnetError, ValueError):
    """Tensor shapes are incompatible for an operator."""


class NumericalError(SonarHistnetError, FloatingPointError):
    """A NaN or Inf appeared where finite values are required."""


class TrainingError(SonarHistnetError):
    """A training run cannot continue."""


class CheckpointError(SonarHistnetError):
    """A checkpoint file is malformed or does not match the model."""


class ConfigError(SonarHistnetError, ValueError):
    """Configuration is invalid."""


class MissingStageError(SonarHistnetError):
    """A pipeline stage was run before the stage it depends on."""

    def __init__(self, stage: str, detail: str):
        self.stage = stage
        super().__init__(f"run `sonar-histnet {stage}` first: {detail}")
