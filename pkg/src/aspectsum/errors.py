"""Exception types shared across the package."""


class AspectSumError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(AspectSumError):
    """Invalid configuration, hyperparameters, or command-line usage."""


class ValidationError(AspectSumError):
    """Input data violates a documented invariant."""


class CorpusFormatError(ValidationError):
    """A corpus, schema, or vector file could not be parsed."""


class ModelFormatError(ValidationError):
    """A serialized model container is malformed or inconsistent."""


class EmptySentenceError(AspectSumError):
    """A zero-length sentence reached an operation that needs at least one word."""
