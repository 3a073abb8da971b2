class InvalidInputError(ValueError):
    """Raised when an argument violates a documented precondition."""


class ProtocolError(RuntimeError):
    """Raised by the controller on out-of-order or malformed updates."""


class UnknownNodeError(KeyError):
    pass


class TraceError(ValueError):
    """Trace ingestion or splitting failure. ``row`` is the 1-based CSV line when known."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class TrainingError(RuntimeError):
    def __init__(self, message, epoch):
        super().__init__(f"epoch {epoch}: {message}")
        self.epoch = epoch
