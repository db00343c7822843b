"""Exception hierarchy shared across the package."""


class ShuffleFormerError(Exception):
    """Base class for every error raised by this package."""


class InvalidShapeError(ShuffleFormerError):
    """Tensor shapes (or dtypes) are inconsistent with the requested operation."""


class InvalidConfigError(ShuffleFormerError):
    """A configuration value is out of its allowed range or inconsistent."""


class InvalidCallError(ShuffleFormerError):
    """An operation was called in a way its contract forbids."""


class PartitionError(ShuffleFormerError):
    """Spatial extent is not divisible by the window size; no implicit padding."""


class DegenerateBatchError(ShuffleFormerError):
    """Batch statistics were requested over fewer than two elements per channel."""


class CheckpointError(ShuffleFormerError):
    """A checkpoint file is malformed or inconsistent with the model config."""


class NumericsError(ShuffleFormerError):
    """Validation mode caught a non-finite value entering an operation."""


class TrainingDivergedError(ShuffleFormerError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int) -> None:
        super().__init__(f"loss became non-finite at step {step}")
        self.step = step
