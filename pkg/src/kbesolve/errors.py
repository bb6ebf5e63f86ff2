"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, a numerically poisoned state with 3, and I/O or file-format
problems with 4.
"""


class ConfigError(ValueError):
    """Invalid configuration value; the message names the offending key."""


class CapacityError(RuntimeError):
    """Requested allocation exceeds the configured memory budget."""


class PoisonedStateError(RuntimeError):
    """A non-finite value was detected in the propagated state."""


class TrajectoryFormatError(RuntimeError):
    """Trajectory file is malformed, truncated, or has the wrong magic."""
