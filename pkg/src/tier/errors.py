"""Exception types shared across the toolkit.

ValidationError covers bad inputs (manifests, configs, shapes); everything
else derives from TierError and is treated as a runtime failure by the CLI.
"""


class TierError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TierError):
    """Invalid input: malformed manifest, bad config, shape mismatch, unknown name."""


class UndefinedCorrelationError(TierError):
    """Correlation is mathematically undefined (constant input vector)."""


class TrainingError(TierError):
    """Training loop failure, e.g. non-finite loss."""
