"""Exception hierarchy shared by all softlex modules."""


class SoftlexError(Exception):
    """Base class for every error raised by softlex."""


class ConfigurationError(SoftlexError, ValueError):
    """Invalid configuration, dimensions or arguments."""


class IntegrityError(SoftlexError):
    """Internally inconsistent data (unknown ids, broken word sets)."""


class PreconditionError(SoftlexError, ValueError):
    """An operation was called with inputs outside its domain."""


class FormatError(SoftlexError, ValueError):
    """A file could not be parsed.

    ``line`` is the 1-based line number of the offending line, when known.
    """

    def __init__(self, message: str, path=None, line: int | None = None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line


class TapeError(SoftlexError, RuntimeError):
    """Backward was requested on a tape that has already been consumed."""


class NumericError(SoftlexError, ArithmeticError):
    """Non-finite values appeared during training."""
