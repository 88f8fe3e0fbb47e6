"""Exception types shared across the package.

The CLI maps these to distinct exit codes, so library code should raise
the most specific type that applies rather than bare ValueError.
"""


class ParseError(ValueError):
    """Malformed input data (bad line, duplicate feature, duplicate id)."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(ArithmeticError):
    """A numerical routine failed to converge or produced a degenerate value."""


class GuardError(RuntimeError):
    """A resource guard tripped (candidate budget, pair-count cap, hash cap)."""


class UnsupportedMeasure(ValueError):
    """The requested operation does not support this similarity measure."""
