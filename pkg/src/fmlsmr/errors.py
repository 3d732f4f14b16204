"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are not conformable."""


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; ``lineno`` is 1-based (0 if unknown)."""

    def __init__(self, message, lineno=0):
        self.lineno = lineno
        if lineno:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class DenseCapError(ValueError):
    """A dense materialization would exceed the configured entry cap."""


class NumericalFault(ArithmeticError):
    """Non-finite values or a violated positivity condition during a solve."""

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"outer step {step}: {message}"
        super().__init__(message)


class IndefinitePreconditionerError(NumericalFault):
    """<v, p> < 0 for a preconditioner apply that should be SPD."""
