"""Exception hierarchy shared across the package."""


class KanRBFError(Exception):
    """Base class for all package errors."""


class DomainError(KanRBFError, ValueError):
    """An argument lies outside the domain of an operation."""


class SmoothnessError(DomainError):
    """The kernel is not smooth enough for the requested derivative."""


class GeometryError(KanRBFError):
    """Degenerate geometry: duplicate points, collinear stencils, colliding ghosts."""


class ConditioningError(KanRBFError):
    """A factorization failed even after regularization."""


class InfeasibleError(KanRBFError):
    """Interpolation constraints could not be satisfied to tolerance."""


class DataError(KanRBFError, ValueError):
    """Input data unusable for the requested operation."""


class ParseError(DataError):
    """Malformed input file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
