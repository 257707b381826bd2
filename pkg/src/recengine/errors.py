"""Exception hierarchy shared across the package."""


class RecEngineError(Exception):
    """Base class for every error raised by recengine."""


class EmptyDataset(RecEngineError, ValueError):
    pass


class EmptyInput(RecEngineError, ValueError):
    pass


class DuplicateInteraction(RecEngineError, ValueError):
    pass


class ParseError(RecEngineError, ValueError):
    """Malformed input line. ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class InvalidK(RecEngineError, ValueError):
    pass


class InvalidFraction(RecEngineError, ValueError):
    pass


class InvalidConfig(RecEngineError, ValueError):
    pass


class AlreadyCarved(RecEngineError):
    pass


class DimensionError(RecEngineError, ValueError):
    pass


class DegenerateScale(RecEngineError, ValueError):
    pass


class DomainError(RecEngineError, ValueError):
    pass


class UnknownCategory(RecEngineError, KeyError):
    pass


class ColdStart(RecEngineError, KeyError):
    """No training history for the requested user or item."""


class DivergenceError(RecEngineError, ArithmeticError):
    def __init__(self, message: str, epoch: int | None = None, member: int | None = None):
        self.epoch = epoch
        self.member = member
        super().__init__(message)


class SingularSystem(RecEngineError, ArithmeticError):
    pass


class UndefinedAUC(RecEngineError, ValueError):
    pass


class InvalidReference(RecEngineError, ValueError):
    pass
