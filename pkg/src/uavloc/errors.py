"""Exception hierarchy. The CLI maps the three base classes to exit codes."""


class UavlocError(Exception):
    """Base class for all package errors."""


class ConfigError(UavlocError, ValueError):
    """Invalid or inconsistent configuration (bad values, missing paths)."""


class DataError(UavlocError):
    """Input data that violates a contract (bad observation, too few frames...)."""


class InvalidObservationError(DataError, ValueError):
    pass


class NoDetectionError(DataError, ValueError):
    pass


class InvalidPoseError(DataError, ValueError):
    pass


class RejectedPoseError(InvalidPoseError):
    """Pose whose marker would not be fully visible in the rendered image."""


class InsufficientFramesError(DataError, ValueError):
    pass


class InsufficientDataError(DataError, ValueError):
    pass


class NoOverlapError(DataError, ValueError):
    pass


class TrainingDivergedError(UavlocError, RuntimeError):
    pass
