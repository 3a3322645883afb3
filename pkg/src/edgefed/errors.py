"""Exception types shared across the package."""


class EdgefedError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(EdgefedError):
    """Tensor shapes do not conform; the message names the offending axis."""


class ValidationError(EdgefedError):
    """An argument or configuration value violates its contract."""


class StateError(EdgefedError):
    """An operation was invoked against stale or missing internal state."""


class FormatError(EdgefedError):
    """Malformed bytes or file content."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConsistencyError(EdgefedError):
    """Two inputs that must agree with each other do not."""


class ProtocolError(EdgefedError):
    """A federated round violated the message protocol."""

    def __init__(self, message: str, worker_id: int | None = None):
        if worker_id is not None:
            message = f"worker {worker_id}: {message}"
        super().__init__(message)
        self.worker_id = worker_id
