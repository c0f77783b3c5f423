"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: configuration errors -> 2, backend
errors -> 3, data-validation errors -> 4.
"""


class ConfigurationError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataFormatError(ValueError):
    """A file could not be parsed; the message carries the location."""


class DataValidationError(ValueError):
    """Parsed data violates a structural invariant (e.g. dangling ids)."""


class BackendError(RuntimeError):
    """Base class for model-backend failures."""


class TransportError(BackendError):
    """Transient failure talking to a remote backend; safe to retry."""


class ProtocolError(BackendError):
    """The remote backend answered with something outside the wire contract."""


class FitError(BackendError):
    """Student fitting could not proceed (e.g. empty pseudo-label set)."""
