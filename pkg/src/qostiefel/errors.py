"""Exception hierarchy shared by every module of the package."""


class QOError(Exception):
    """Base class for all errors raised by qostiefel."""


class ShapeError(QOError, ValueError):
    """Operands have incompatible dimensions."""


class ContractError(QOError, ValueError):
    """An input violates a documented precondition (e.g. symmetry)."""


class SizeError(QOError, ValueError):
    """A dense materialization would exceed the configured dense cap."""


class ParameterError(QOError, ValueError):
    """A scalar parameter is outside its admissible range."""


class NumericalError(QOError, ArithmeticError):
    """A numerical kernel failed to produce a trustworthy result."""


class SingularMatrixError(NumericalError):
    """LU factorization hit a pivot below the singularity threshold.

    Attributes
    ----------
    step : int
        Zero-based elimination step at which the small pivot appeared.
    pivot : float
        Magnitude of the offending pivot.
    """

    def __init__(self, message, step=None, pivot=None):
        super().__init__(message)
        self.step = step
        self.pivot = pivot


class RankDeficiencyError(NumericalError):
    """Columns of a block are linearly dependent.

    Attributes
    ----------
    column : int
        Index of the first column found to depend on its predecessors.
    """

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class StepSizeError(NumericalError):
    """The Woodbury core matrix is singular for the requested step."""


class DivergenceError(NumericalError):
    """A non-finite value appeared during the outer iteration."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class DegeneracyError(NumericalError):
    """The Gram matrix of the iterate lost positive definiteness."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class FitError(QOError, ValueError):
    """Too few usable points to fit a decay rate."""


class ParseError(QOError, ValueError):
    """A text file could not be parsed; carries the 1-based line number."""

    def __init__(self, message, line=None, path=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.line = line
        self.path = path


class ConfigError(ParseError):
    """Experiment configuration is malformed or inconsistent."""
