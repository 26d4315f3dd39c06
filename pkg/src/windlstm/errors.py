"""Exception hierarchy shared across the package."""


class WindLstmError(Exception):
    """Base class for all errors raised by windlstm."""


class ShapeError(WindLstmError, ValueError):
    pass


class DomainError(WindLstmError, ValueError):
    pass


class DataError(WindLstmError, ValueError):
    """Problems with input data (parsing, cleaning, windowing)."""


class SchemaError(DataError):
    pass


class CsvParseError(DataError):
    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class OrderingError(DataError):
    pass


class EmptyDatasetError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class SplitError(DataError):
    pass


class UndefinedCorrelationError(WindLstmError, ValueError):
    pass


class UndefinedR2Error(WindLstmError, ValueError):
    """Raised when R² is undefined; ``partial`` holds the remaining metrics."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class NumericError(WindLstmError, ArithmeticError):
    pass


class StateError(WindLstmError, RuntimeError):
    pass


class SingularMatrixError(WindLstmError, ArithmeticError):
    pass


class ConvergenceError(WindLstmError, RuntimeError):
    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class DivergenceError(WindLstmError, RuntimeError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ModelFormatError(WindLstmError, ValueError):
    """A model document could not be decoded."""


class ModelVersionError(ModelFormatError):
    pass


class ModelTruncatedError(ModelFormatError):
    pass


class ModelShapeError(ModelFormatError):
    pass
