"""Exception hierarchy shared by all modules."""


class ShearflowError(Exception):
    """Base class for every error raised by this package."""


class GeometryError(ShearflowError):
    pass


class CylinderViolation(GeometryError):
    """A wall profile enters the cylinder ``|x2| < l1/2``."""


class DiameterViolation(GeometryError):
    """A cross-section is wider than ``l2``."""


class NonPositiveLength(GeometryError):
    pass


class BadInterval(GeometryError):
    pass


class WrongSide(GeometryError):
    pass


class MeshFailure(GeometryError):
    pass


class OutsideDomain(GeometryError):
    pass


class EvaluationTooCloseToAxis(ShearflowError):
    pass


class DimensionMismatch(ShearflowError):
    pass


class NonConvergence(ShearflowError):
    """Raised when the nonlinear iteration hits its iteration cap.

    The last iterate and residual history are attached so callers can still
    write artifacts.
    """

    def __init__(self, message, solution=None, history=None):
        super().__init__(message)
        self.solution = solution
        self.history = history or []


class LinearSolveFailure(ShearflowError):
    pass


class NonZeroMean(ShearflowError):
    pass


class WindowExceedsDomain(ShearflowError):
    pass


class GridMismatch(ShearflowError):
    pass


class SliceOutsideMesh(ShearflowError):
    pass


class TooFewSamples(ShearflowError):
    pass


class NotStrictlyIncreasingPsi(ShearflowError):
    pass


class HypothesisViolated(ShearflowError):
    pass


class RegionMismatch(ShearflowError):
    pass


class BadExponent(ShearflowError, ValueError):
    pass


class EmptyTracePart(ShearflowError):
    pass


class ConfigError(ShearflowError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class IoError(ShearflowError):
    """An artifact could not be written or parsed."""
