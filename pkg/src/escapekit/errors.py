"""Exception hierarchy. Every error raised by the package derives from EscapeKitError."""


class EscapeKitError(Exception):
    pass


class DomainError(EscapeKitError, ValueError):
    """A point lies outside the domain an operation is defined on."""


class PreconditionError(EscapeKitError, ValueError):
    pass


class NumericError(EscapeKitError, ArithmeticError):
    """An iterative solve failed; ``residual`` holds the last residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ContinuationError(NumericError):
    """Inverse-branch continuation came too close to a branch point."""


class CertificationError(EscapeKitError):
    """A numerical certificate failed; ``witness`` is an offending point."""

    def __init__(self, message, witness=None, value=None):
        super().__init__(message)
        self.witness = witness
        self.value = value


class DegenerateCutError(EscapeKitError):
    """A pulled-back curve lies entirely inside its cut disk."""


class ResolutionError(EscapeKitError):
    """The flood-fill grid is too coarse for the tract geometry."""


class ModelFileError(EscapeKitError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigurationError(EscapeKitError):
    """A search over a configuration parameter ran past its limit."""
