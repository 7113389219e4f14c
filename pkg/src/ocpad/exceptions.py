"""Exception hierarchy shared by every module."""


class OcpadError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OcpadError, ValueError):
    """Invalid argument, configuration or data layout."""


class DimensionError(ValidationError):
    """Vectors or matrices with incompatible shapes."""


class DegenerateInputError(ValidationError):
    """Input is well-formed but mathematically degenerate (zero vector, zero spread)."""


class ConvergenceError(OcpadError, ArithmeticError):
    """An iterative solver hit its iteration cap."""


class PathBreakdownError(OcpadError, ArithmeticError):
    """The homotopy active-set system became numerically singular."""

    def __init__(self, message, lam=None):
        super().__init__(message)
        self.lam = lam


class ParseError(ValidationError):
    """Malformed feature file."""


class ModelFormatError(OcpadError):
    """Unreadable, truncated or version-mismatched model file."""


class UnknownClientError(OcpadError, KeyError):
    """A claimed identity has no enrolled model."""

    def __str__(self):
        return str(self.args[0]) if self.args else "unknown client"


class TrainingError(OcpadError):
    """Per-client training failed; ``clients`` lists the offenders."""

    def __init__(self, message, clients=()):
        super().__init__(message)
        self.clients = tuple(clients)


class DataIntegrityError(ValidationError):
    """Score data violates a grouping invariant (e.g. mixed labels in one video)."""
