"""Exception types raised across the package."""


class StepUpError(Exception):
    """Base class for all package errors."""


class InvalidInputError(StepUpError, ValueError):
    """A numeric input is non-finite or outside its domain."""


class PolygonDegenerateError(InvalidInputError):
    """A support polygon has too few vertices, is collinear or is not convex CCW."""


class ConfigurationError(StepUpError, ValueError):
    """A scenario or cost configuration is inconsistent."""


class ScenarioError(ConfigurationError):
    """A scenario document failed to parse or validate.

    ``path`` holds the field path of the offending entry, e.g. ``phases[2].T_min``.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        prefix = f"{path}: " if path else ""
        suffix = f" (line {line})" if line is not None else ""
        super().__init__(f"{prefix}{message}{suffix}")


class NumericalFailure(StepUpError, ArithmeticError):
    """An evaluator returned non-finite values."""


class DivergenceError(NumericalFailure):
    """A forward rollout produced a non-finite state."""

    def __init__(self, message, time=None):
        self.time = time
        super().__init__(message)
