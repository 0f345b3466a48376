"""Exception hierarchy shared by every gsdfuse module."""


class GSDFuseError(Exception):
    """Base class for all errors raised by the package."""


class ConfigError(GSDFuseError, ValueError):
    """Invalid configuration value or incompatible option combination."""


class ForestParseError(GSDFuseError, ValueError):
    """A dataset line could not be parsed."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class IntegrityError(GSDFuseError, ValueError):
    """The dialogue forest violates a structural invariant."""


class DecodeError(GSDFuseError, ValueError):
    """A token sequence cannot be decoded with the given model."""


class SynthesisError(GSDFuseError, RuntimeError):
    pass


class SamplerError(GSDFuseError, RuntimeError):
    pass


class NumericError(GSDFuseError, FloatingPointError):
    """Non-finite values reached a loss or a fused embedding."""


class FingerprintError(GSDFuseError, ValueError):
    """Checkpoint fingerprint does not match the dataset or configuration."""
