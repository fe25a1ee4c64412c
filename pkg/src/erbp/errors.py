"""Exception hierarchy shared by the library and the CLI."""


class ErbpError(Exception):
    """Base class for all library errors."""


class ConfigError(ErbpError, ValueError):
    """Invalid configuration value. ``field`` names the offending setting."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DataError(ErbpError):
    """Bad input data (event files, manifests, labels)."""


class ParseError(DataError):
    """Malformed record in an event file."""

    def __init__(self, message: str, path=None, offset: int | None = None, unit: str = "line"):
        self.path = path
        self.offset = offset
        loc = f" at {unit} {offset}" if offset is not None else ""
        where = f"{path}{loc}: " if path is not None else (f"{unit} {offset}: " if offset is not None else "")
        super().__init__(where + message)


class IntegrityError(DataError):
    """Event stream violates an ordering or bounds invariant."""


class BoundsError(DataError, IndexError):
    """Event lies outside the declared sensor geometry."""


class CheckpointError(ErbpError):
    """Checkpoint is corrupted, truncated or has an unsupported version."""
