"""Exception hierarchy shared by every module in the package."""


class CIError(Exception):
    """Base class for all package errors."""


class DomainError(CIError, ValueError):
    pass


class InsufficientData(CIError, ValueError):
    pass


class DegenerateInput(CIError, ValueError):
    pass


class DegenerateVariance(CIError, ArithmeticError):
    """The per-sample test terms have (numerically) zero spread."""


class DimensionMismatch(CIError, ValueError):
    pass


class UnsupportedDimension(CIError, ValueError):
    pass


class NonConvergence(CIError, RuntimeError):
    pass


class SingularSystem(CIError, ArithmeticError):
    pass


class OneClassOnly(CIError, ValueError):
    pass


class UnsupportedKind(CIError, ValueError):
    pass


class NonConvexLoss(CIError, ValueError):
    pass


class EmptyBin(CIError, ValueError):
    pass


class ConfigError(CIError, ValueError):
    """Invalid experiment configuration; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"[{key}] {message}")
        self.key = key


class MissingColumn(ConfigError):
    pass


class NonNumericCell(CIError, ValueError):
    def __init__(self, row, column, value):
        super().__init__(f"non-numeric cell at row {row}, column {column!r}: {value!r}")
        self.row = row
        self.column = column


class EmptyFile(CIError, ValueError):
    pass
