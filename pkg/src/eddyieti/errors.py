"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument passed to a public routine."""


class ConfigurationError(ValueError):
    """Inconsistent experiment or patch layout configuration."""


class ConstructionError(RuntimeError):
    """A discrete object could not be built from otherwise valid input."""


class NonsingularityError(RuntimeError):
    """A local factorization met a non-positive pivot (gauging defect)."""


class ConvergenceError(RuntimeError):
    """An iterative solve did not converge; carries the partial statistics."""

    def __init__(self, message, stats=None):
        super().__init__(message)
        self.stats = stats
