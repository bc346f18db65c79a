"""Exception types shared across the package."""


class SpantagError(Exception):
    """Base class for all spantag errors."""


class ConfigError(SpantagError):
    """Invalid configuration: bad hyperparameters, missing descriptions, etc."""


class DataError(SpantagError):
    """Invalid data: out-of-bounds spans, unknown classes, malformed inputs."""


class ParseError(DataError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CheckpointError(SpantagError):
    """Unreadable, corrupt, or incompatible checkpoint file."""
