"""Exception hierarchy shared across the toolkit.

Every error raised on purpose derives from RestokitError so the CLI can map
failures to stable exit codes (config problems exit 3, everything else 1).
"""


class RestokitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(RestokitError):
    """Invalid or unknown configuration value; message names the field."""


class ShapeMismatchError(RestokitError):
    """Two arrays that must agree in shape do not."""


class DomainError(RestokitError):
    """A scalar argument is outside its documented domain."""


class NormalizationError(RestokitError):
    """An image was passed outside its expected value range."""


class TokenizationError(RestokitError):
    """A caption contains a word outside the closed vocabulary."""


class FrozenParameterError(RestokitError):
    """A parameter that must stay frozen was mutated during training."""


class CheckpointError(RestokitError):
    """Base class for checkpoint container failures."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint schema version does not match this build."""


class CheckpointCorruptError(CheckpointError):
    """Checkpoint payload failed its integrity check (truncation, bit rot)."""


class CheckpointShapeError(CheckpointError):
    """A stored array does not fit the model it is being loaded into."""
