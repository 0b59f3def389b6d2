"""Exception types shared across the package."""


class BatnasError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(BatnasError):
    """Invalid configuration value, file, or key."""


class DataError(BatnasError):
    """Malformed, missing, or inconsistent input data."""


class EvaluationError(BatnasError):
    """Fitness evaluation failed where failure is not tolerated (swarm init)."""


class DivergenceError(BatnasError):
    """Training produced a non-finite loss.

    Carries the 1-based epoch at which divergence was detected.
    """

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")


class CheckpointError(BatnasError):
    """Checkpoint file is unreadable or incompatible with the request."""
