"""Exception hierarchy shared across the package."""


class WadirlError(Exception):
    """Base class for all package errors."""


class ConfigError(WadirlError):
    """Invalid scenario or training configuration."""


class UsageError(WadirlError):
    """API misuse: stepping terminal states, shape mismatches, bad bins."""


class RecordingError(WadirlError):
    """Demonstration stream was truncated or empty."""


class IntegrityError(WadirlError):
    """Stored data fails its digest chain or structural invariants."""


class VersionError(WadirlError):
    """File schema version is newer than this build understands."""


class TrainingError(WadirlError):
    """Non-finite loss or other unrecoverable training failure."""
