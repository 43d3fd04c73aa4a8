"""Exception types raised by the estimators and mapped to CLI exit codes."""


class NumericalError(RuntimeError):
    """A numerical problem (singular design, solver failure) prevented a result."""


class InvariantError(AssertionError):
    """An internal post-condition did not hold."""
