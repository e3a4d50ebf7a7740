"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Malformed or unknown configuration key/value."""


class NumericFailure(RuntimeError):
    """Non-finite values where finite ones are required (iteration rejected)."""


class InsufficientBuffer(RuntimeError):
    """Replay buffer holds fewer transitions than the update needs."""


class IterationFailure(RuntimeError):
    """Every worker of a meta-iteration failed; the distribution is unchanged."""


class CheckpointError(RuntimeError):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    """File does not start with the checkpoint magic bytes."""


class UnsupportedVersionError(CheckpointError):
    """Checkpoint format version is newer than this build understands."""


class TruncatedCheckpointError(CheckpointError):
    """File ended before the declared payload was read."""
