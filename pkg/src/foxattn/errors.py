"""Error types shared across the package.

Plain ValueError is used for domain errors on values (positive log-gates,
negative slopes, out-of-range tokens); the classes below mark the structural
failure categories that callers may want to catch separately.
"""


class ShapeError(ValueError):
    """Array dimensions do not satisfy an operation's contract."""


class ConfigError(ValueError):
    """Bad configuration value or unparseable / unknown config key."""


class CheckpointError(ValueError):
    """Malformed checkpoint bytes or checkpoint/config mismatch."""


class TrainingFault(RuntimeError):
    """Non-finite loss or gradient encountered during training."""
