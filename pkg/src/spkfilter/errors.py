"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A model/config is internally inconsistent (dimension mismatch, bad topology)."""


class UsageError(ValueError):
    """An operation was called with arguments outside its contract."""


class CheckpointError(RuntimeError):
    """A checkpoint file is unreadable or belongs to a different topology."""


class TrainingError(RuntimeError):
    """Training aborted (non-finite loss or gradient)."""
