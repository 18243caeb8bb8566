class ShapeMismatchError(ValueError):
    """An array does not have the shape implied by the model or by another argument."""


class LikelihoodMismatchError(ValueError):
    """Data or parameters belong to a different observation family than requested."""


class CorruptCheckpointError(ValueError):
    """A checkpoint file is truncated, has the wrong magic number, or disagrees with its spec."""


class SequenceFileError(ValueError):
    """A sequence container file is truncated, has the wrong magic number, or is inconsistent."""


class ConfigError(ValueError):
    """A run configuration contains unknown keys or values that cannot be parsed."""


class NonFiniteSignalError(FloatingPointError):
    """The NVIL learning signal became NaN or infinite.

    Attributes:
        iteration: The training iteration at which the signal diverged, if known.
        values: The offending per-timestep signal values.
    """

    def __init__(self, message: str, iteration: int | None = None, values=None) -> None:
        super().__init__(message)
        self.iteration = iteration
        self.values = values


class CheckpointShapeError(CorruptCheckpointError, ShapeMismatchError):
    """A checkpoint's tensor table disagrees with the shapes implied by its own model spec."""
