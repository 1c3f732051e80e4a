"""Exception hierarchy shared by every transforseg module."""


class TransForSegError(Exception):
    """Base class for all errors raised by transforseg."""


class DimensionError(TransForSegError, ValueError):
    """Tensor shapes do not satisfy an operation's contract."""


class ConfigError(TransForSegError, ValueError):
    """A configuration value or cross-field invariant is invalid."""


class ContractError(TransForSegError, ValueError):
    """A caller violated an operation's precondition."""


class NonFiniteError(TransForSegError, ArithmeticError):
    """A NaN or Inf appeared at an operation boundary."""


class GenerationError(TransForSegError):
    """A synthetic sample could not be generated (e.g. catheter leaves the frame)."""


class MetricError(TransForSegError, ValueError):
    """A metric is undefined for the given inputs."""


class CompatibilityError(TransForSegError):
    """A checkpoint does not match the dataset it is applied to."""


class TrainingAbortedError(TransForSegError):
    """Training hit a non-finite loss."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


class CheckpointError(TransForSegError):
    """Base class for checkpoint decoding failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic bytes or CRC mismatch."""


class CheckpointVersionError(CheckpointError):
    """Unsupported checkpoint format version."""


class CheckpointShapeError(CheckpointError):
    """A stored tensor does not match the shape its name requires."""


class CheckpointTruncatedError(CheckpointError):
    """The file ended before the declared content."""


class DatasetIOError(TransForSegError, OSError):
    """Reading or writing dataset files failed."""


class ManifestError(TransForSegError, ValueError):
    """A dataset manifest is malformed or inconsistent."""
