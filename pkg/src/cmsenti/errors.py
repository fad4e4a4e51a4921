"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an argument or configuration violates a documented contract."""


class ShapeError(ValidationError):
    """Raised when tensor shapes do not line up; the message names both shapes."""


class TrainingDiverged(RuntimeError):
    """Raised when a training loss becomes NaN or infinite."""


class CheckpointError(RuntimeError):
    """Base class for checkpoint load/save failures."""


class ChecksumError(CheckpointError):
    """Raised when a checkpoint file fails its integrity check."""


class VersionMismatchError(CheckpointError):
    """Raised when a checkpoint was written by an incompatible format version."""


class ComponentHashError(CheckpointError):
    """Raised when a checkpoint is used with components it was not trained with."""


class DependencyError(RuntimeError):
    """Raised when a pipeline step is missing an artifact a previous step produces."""
