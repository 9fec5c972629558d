class UnlockError(Exception):
    pass


class DimensionMismatch(UnlockError, ValueError):
    pass


class SumMismatch(UnlockError, ValueError):
    pass


class BranchMismatch(UnlockError, ValueError):
    pass


class ConfigInvalid(UnlockError, ValueError):
    pass


class FormatError(UnlockError, ValueError):
    """A file or manifest could not be parsed.

    ``path`` and ``field`` name the offending file and key when known.
    """

    def __init__(self, message, path=None, field=None):
        self.message = message
        self.path = str(path) if path is not None else None
        self.field = field
        parts = [message]
        if self.path:
            parts.append(f"file={self.path}")
        if field:
            parts.append(f"field={field}")
        super().__init__(" ".join(parts))


class EmptyDatasetWarning(UserWarning):
    """Thresholds were computed from a prediction set with no entries at all."""
