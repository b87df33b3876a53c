"""Exception and warning types shared across bipkit."""


class BipError(Exception):
    """Base class for all bipkit errors."""


class InvalidTrajectoryError(BipError, ValueError):
    pass


class ParseError(BipError, ValueError):
    """Raised when an interaction or model file cannot be parsed.

    ``line`` is the 1-based line number of the offending line, or None when
    the problem is not tied to a single line.
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class LayoutError(BipError, ValueError):
    pass


class InsufficientDataError(BipError, ValueError):
    pass


class UnderdeterminedError(BipError, ValueError):
    pass


class ConfigError(BipError, ValueError):
    pass


class NumericalWarning(RuntimeWarning):
    """Emitted when a computation needed regularization to proceed."""


class DegenerateDataWarning(RuntimeWarning):
    """Emitted when input data is degenerate (e.g. a constant channel)."""
