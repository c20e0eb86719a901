"""Exception hierarchy.

Every error carries a ``category`` tag so the CLI can report a
machine-readable failure class.
"""


class WentzellError(Exception):
    category = "error"


class InvalidArgument(WentzellError, ValueError):
    category = "invalid-argument"


class UnsupportedGeometry(WentzellError):
    category = "unsupported-geometry"


class UnsupportedConfiguration(WentzellError):
    category = "unsupported-configuration"


class SingularWeight(WentzellError, ValueError):
    category = "singular-weight"


class WeightOverflow(WentzellError, OverflowError):
    category = "weight-overflow"


class SolverError(WentzellError, RuntimeError):
    category = "solver"

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConvergenceError(SolverError):
    category = "non-convergence"


class InvariantViolation(WentzellError):
    category = "invariant-violation"


class UndefinedRatio(WentzellError, ArithmeticError):
    category = "undefined-ratio"


class ConfigError(WentzellError):
    category = "config"
