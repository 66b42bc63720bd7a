"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: usage errors exit 1, format and
configuration errors exit 2, numerical/domain failures exit 3.
"""


class EmitterLabError(Exception):
    exit_code = 3


class UsageError(EmitterLabError):
    exit_code = 1


class ConfigError(EmitterLabError, ValueError):
    """Invalid or incomplete configuration (missing wavelength, bad key, ...)."""

    exit_code = 2

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None and line is not None:
            where = f"{source}:{line}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class FormatError(EmitterLabError, ValueError):
    exit_code = 2


class BadMagicError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class NonMonotonicError(FormatError):
    pass


class CountMismatchError(FormatError):
    pass


class DomainError(EmitterLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PreconditionError(EmitterLabError, ValueError):
    """Input violates a documented precondition (e.g. unsorted timestamps)."""


class NumericalError(EmitterLabError, ArithmeticError):
    """A numerical procedure could not produce a valid result."""
