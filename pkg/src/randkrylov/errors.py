"""Exception hierarchy shared by all modules."""


class RandKrylovError(Exception):
    """Base class for library errors."""


class ParameterError(RandKrylovError, ValueError):
    """Invalid scalar parameter (dimension, count, tolerance)."""


class ShapeError(RandKrylovError, ValueError):
    """Array shapes are inconsistent with the operation."""


class SingularFactorError(RandKrylovError, ArithmeticError):
    """A triangular factor is numerically singular at ``index``."""

    def __init__(self, msg: str, index: int):
        super().__init__(msg)
        self.index = index


class BreakdownError(RandKrylovError, ArithmeticError):
    """A new column is numerically dependent on the previous ones."""

    def __init__(self, msg: str, column: int):
        super().__init__(msg)
        self.column = column


class WhiteningError(RandKrylovError, ArithmeticError):
    """The sketched basis is rank deficient, so whitening is not possible."""

    def __init__(self, msg: str, column: int, cond: float):
        super().__init__(msg)
        self.column = column
        self.cond = cond


class ConvergenceError(RandKrylovError, RuntimeError):
    """An iteration hit its cap; ``partial`` holds the last state."""

    def __init__(self, msg: str, partial=None):
        super().__init__(msg)
        self.partial = partial


class ReorderError(RandKrylovError, RuntimeError):
    """Schur reordering failed on the block pair ``blocks``."""

    def __init__(self, msg: str, blocks=None):
        super().__init__(msg)
        self.blocks = blocks


class DomainError(RandKrylovError, ValueError):
    """The spectrum lies outside the domain of the requested function."""

    def __init__(self, msg: str, eigenvalues=None):
        super().__init__(msg)
        self.eigenvalues = eigenvalues


class SingularEquationError(RandKrylovError, ArithmeticError):
    """Sylvester equation with overlapping spectra of A and -B."""


class ConversionError(RandKrylovError, ArithmeticError):
    """A Krylov decomposition could not be brought to Arnoldi form."""


class CycleError(RandKrylovError, RuntimeError):
    """A restart cycle of an eigensolver failed."""


class MatrixMarketError(RandKrylovError, ValueError):
    """Malformed Matrix Market input; ``line`` is 1-based."""

    def __init__(self, msg: str, line: int):
        super().__init__(f"line {line}: {msg}")
        self.line = line


class UnsupportedFormatError(RandKrylovError, ValueError):
    """Matrix Market field or format that is not handled."""


class ConfigError(RandKrylovError, ValueError):
    """Invalid experiment configuration."""


class SingularProjectionError(RandKrylovError, ArithmeticError):
    """Projected matrix singular at the final length; ``partial`` holds the last valid result."""

    def __init__(self, msg: str, partial=None):
        super().__init__(msg)
        self.partial = partial
