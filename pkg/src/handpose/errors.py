"""Exception hierarchy shared across the package."""


class HandPoseError(Exception):
    """Base class for every error raised by handpose."""


class InvalidInputError(HandPoseError, ValueError):
    pass


class StructuralError(HandPoseError, ValueError):
    """Shapes, channel counts or level counts do not line up."""


class DegenerateInputError(HandPoseError, ValueError):
    pass


class BehindCameraError(HandPoseError, ValueError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class NonConvergenceError(HandPoseError, RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class InvalidStateError(HandPoseError, RuntimeError):
    pass


class TrainingError(HandPoseError, RuntimeError):
    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class FormatError(HandPoseError, ValueError):
    """Malformed image, manifest or checkpoint file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(HandPoseError, ValueError):
    pass


class EvalError(HandPoseError, ValueError):
    pass
