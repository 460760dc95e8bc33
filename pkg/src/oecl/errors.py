"""Exception hierarchy shared by every oecl module."""


class OECLError(Exception):
    """Base class for all library errors."""


class DimensionError(OECLError, ValueError):
    """Shapes do not agree, or an axis is out of range."""


class DomainError(OECLError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class ContractError(OECLError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(OECLError, ValueError):
    """Malformed or inconsistent experiment configuration."""


class ParseError(OECLError, ValueError):
    """A serialized file could not be parsed.

    ``line`` is the 1-based line number when the format is textual.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(OECLError, ArithmeticError):
    """A numerical procedure failed: non-finite loss or quadrature that did not converge."""
