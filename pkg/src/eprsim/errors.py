"""Exception types shared across the package."""


class ModelError(RuntimeError):
    """A physical model produced an inconsistent quantity (e.g. a non-PSD spectrum)."""


class DegenerateReferenceError(ModelError):
    """The shot-noise reference has (near) zero variance."""


class ConfigError(ValueError):
    """Run configuration failed schema or consistency validation."""


class FitError(RuntimeError):
    """Efficiency fit failed; ``best`` holds the best point found, if any."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
