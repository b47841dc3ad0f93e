"""Exception hierarchy shared across the package."""


class NameBiasError(Exception):
    """Base class for all package errors."""


class ConfigurationError(NameBiasError):
    """Missing or invalid input files, flags or config values."""


class CorpusError(NameBiasError):
    pass


class PoolExhaustedError(NameBiasError):
    """Not enough replacement names left for a sample."""

    def __init__(self, kind, sample_id, needed, available):
        self.kind = kind
        self.sample_id = sample_id
        super().__init__(
            f"{kind} pool exhausted for sample {sample_id!r}: "
            f"need {needed} replacements, {available} candidates available"
        )


class EmbeddingError(NameBiasError):
    """Embedding backend failure; ``indices`` lists the affected inputs."""

    def __init__(self, message, indices=()):
        self.indices = list(indices)
        if self.indices:
            message = f"{message} (inputs {self.indices})"
        super().__init__(message)


class AnonymizationError(NameBiasError):
    def __init__(self, message, sample_id=None):
        self.sample_id = sample_id
        if sample_id is not None:
            message = f"sample {sample_id!r}: {message}"
        super().__init__(message)


class MetricError(NameBiasError, ValueError):
    pass


class UndefinedCorrelationError(MetricError):
    """Correlation requested for a constant sequence."""
