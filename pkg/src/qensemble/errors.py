"""Exception types raised across the package."""


class FormatError(ValueError):
    """A dataset file does not match its binary layout."""

    def __init__(self, message, path=None, offset=None):
        self.path = path
        self.offset = offset
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class DataError(ValueError):
    """Encoded data violates a preprocessing contract (e.g. a zero-norm row)."""


class ConfigurationError(ValueError):
    """A model or experiment configuration is inconsistent."""


class TrainingError(RuntimeError):
    """Training diverged or could not proceed."""


class CheckpointError(ValueError):
    """A checkpoint or prepared-data file is unreadable or incompatible."""
