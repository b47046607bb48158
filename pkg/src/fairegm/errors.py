"""Exception hierarchy shared by every fairegm module."""


class FairEGMError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(FairEGMError, ValueError):
    pass


class CapacityError(FairEGMError, ValueError):
    """Raised when a request asks for more items than exist (e.g. non-edges)."""


class UnsupportedOperationError(FairEGMError, TypeError):
    pass


class UnknownParameterError(FairEGMError, KeyError):
    pass


class DivergenceError(FairEGMError, RuntimeError):
    def __init__(self, epoch, message="non-finite loss"):
        self.epoch = epoch
        super().__init__(f"{message} at epoch {epoch}")


class ParseError(FairEGMError, ValueError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class SchemaError(FairEGMError, ValueError):
    pass
