"""Exception types shared across the package."""


class SketchQnError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(SketchQnError, ValueError):
    """Operands have incompatible shapes."""


class NotSymmetricError(SketchQnError, ValueError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class NotPositiveDefiniteError(SketchQnError, ValueError):
    """A matrix required to be positive definite fails factorization."""


class RejectedSketch(SketchQnError):
    """The sketched curvature matrix S'HS is singular or indefinite.

    The caller is expected to redraw the sketching matrix.
    """


class DomainError(SketchQnError, ValueError):
    """A point lies outside an objective's open domain."""


class LineSearchFailure(SketchQnError, RuntimeError):
    """No acceptable step found within the evaluation budget."""


class ReferenceFailure(SketchQnError, RuntimeError):
    """The reference solve did not reach the required gradient norm."""


class ConfigError(SketchQnError, ValueError):
    """A run configuration document is invalid."""


class LibsvmFormatError(SketchQnError, ValueError):
    """A LIBSVM text file violates the format grammar."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + loc)
        self.line = line
        self.column = column


class TraceSchemaError(SketchQnError, ValueError):
    """A trace CSV does not match the documented column schema."""
