"""Exception types shared across the package."""


class AraidaError(Exception):
    """Base class for all araida-specific failures."""


class ParseError(AraidaError):
    """A record in an input file could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class DimensionError(AraidaError):
    """Feature vectors with incompatible dimensions were mixed."""


class EmbedError(AraidaError):
    """Text could not be turned into a feature vector."""


class EmptyStoreError(AraidaError):
    """The datastore holds no entries; callers should fall back to the model alone."""


class ModelUnavailableError(AraidaError):
    """The external annotation endpoint could not be reached."""


class ProtocolError(AraidaError):
    """The external annotation endpoint replied with something unusable."""


class UnsupportedError(AraidaError):
    """The requested operation does not apply to this kind of model."""
