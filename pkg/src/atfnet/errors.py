"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration/usage problems exit 1,
data problems exit 2, runtime/numeric problems exit 3.
"""


class AtfNetError(Exception):
    pass


class ConfigError(AtfNetError):
    """Invalid configuration value or schema violation."""


# Alias used by encoder construction; same semantics as ConfigError.
InvalidConfig = ConfigError


class DataError(AtfNetError):
    """Problem with dataset files or their contents."""


class BadMagic(DataError):
    """Flow file does not start with the expected float sentinel."""


class Truncated(DataError):
    """Flow file payload is shorter than the header promises."""


class MissingFile(DataError):
    pass


class ShapeMismatch(DataError):
    """Companion rasters of one frame disagree in size."""


class InvalidMask(DataError):
    """Ground-truth mask contains values other than 0 and 255."""


class MissingPrediction(DataError):
    pass


class EmptyGroundTruth(DataError):
    """All-background mask; recall and F-measure are undefined."""


class ShapeError(AtfNetError):
    """Tensor shape does not match a module contract."""


class ChannelError(ShapeError):
    pass


class CheckpointError(AtfNetError):
    pass


class Corrupt(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TrainingDiverged(AtfNetError):
    """Loss became non-finite during optimization."""
