"""Exception hierarchy shared across the package."""


class RemoteRLError(Exception):
    """Base class for all package errors."""


class UsageError(RemoteRLError, ValueError):
    """Caller violated an operation's precondition."""


class DecodeError(RemoteRLError):
    """Malformed bitstring or frame."""


class ProtocolError(RemoteRLError):
    """Controller and actor disagree, or a message is missing or forbidden."""


class TrainingError(RemoteRLError):
    """Non-finite loss or parameters during an update."""


class ConfigError(RemoteRLError):
    """Invalid run configuration. ``line`` is 1-based when known."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
