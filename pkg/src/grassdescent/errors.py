"""Exception hierarchy shared by all modules."""


class GrassDescentError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgument(GrassDescentError, ValueError):
    pass


class DimensionMismatch(GrassDescentError, ValueError):
    pass


class NotPositiveDefinite(GrassDescentError, ValueError):
    pass


class RankDeficient(GrassDescentError, ArithmeticError):
    """Raised when a block of vectors cannot be orthonormalized."""


class MissingOperator(GrassDescentError, ValueError):
    pass


class TooFar(GrassDescentError, ValueError):
    """The frame is too far from the reference subspace for the requested construction."""


class NotTangent(GrassDescentError, ValueError):
    pass


class BudgetExceeded(GrassDescentError, ValueError):
    """A dense (oracle-scale) computation was requested beyond its size budget."""


class NoConvergence(GrassDescentError, ArithmeticError):
    pass


class NoDecrease(GrassDescentError, ArithmeticError):
    """Backtracking exhausted without satisfying the sufficient-decrease rule."""


class InsufficientData(GrassDescentError, ValueError):
    pass


class ConfigError(GrassDescentError, ValueError):
    """Malformed or invalid run configuration.

    ``kind`` is one of ``"parse-error"``, ``"unknown-key"`` or ``"type-error"``.
    """

    def __init__(self, message, kind="parse-error", line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.kind = kind
        self.line = line
        self.line = line
