"""Exception types shared across the package."""


class TactlocError(Exception):
    """Base class for all package errors."""


class ShapeMismatchError(TactlocError):
    """Two operands have incompatible shapes."""

    def __init__(self, op: str, left_shape, right_shape):
        self.op = op
        self.left_shape = tuple(left_shape)
        self.right_shape = tuple(right_shape)
        super().__init__(f"{op}: incompatible shapes {self.left_shape} and {self.right_shape}")


class ConfigurationError(TactlocError):
    """A configuration value is outside what the implementation supports."""


class GradientStateError(TactlocError):
    """backward() was called in a state where no gradient can be computed."""


class OptimizerError(TactlocError):
    """The optimizer refused an update (for example a NaN gradient)."""


class EpisodeStateError(TactlocError):
    """An episode was stepped after it finished."""


class TrainingDivergedError(TactlocError):
    """Training produced a non-finite loss; carries the last good parameters."""

    def __init__(self, message: str, last_good_params=None):
        self.last_good_params = last_good_params
        super().__init__(message)


class DatasetError(TactlocError):
    """A dataset file or its sidecar is missing or malformed."""
