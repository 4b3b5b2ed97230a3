"""Exception hierarchy shared by the library and the CLI."""


class LagSearchError(Exception):
    """Base class; ``exit_code`` is what the CLI returns."""

    exit_code = 1


class InvalidInputError(LagSearchError, ValueError):
    exit_code = 2


class DataError(LagSearchError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NotFoundError(DataError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class NumericalError(LagSearchError, ArithmeticError):
    exit_code = 4


class TrainingError(NumericalError):
    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = f"epoch {epoch}: {message}"
        super().__init__(message)
        self.epoch = epoch
