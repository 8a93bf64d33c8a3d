"""Exception types shared across the package."""


class MrdError(Exception):
    """Base class for package-specific failures."""


class ConvergenceError(MrdError):
    """An iterative solver did not reach its tolerance.

    Carries the final residual so callers can decide whether the partial
    answer is still usable.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SamplingBudgetError(MrdError):
    """A Monte Carlo estimate did not meet the requested standard error."""


class BudgetError(MrdError):
    """A grid, codebook, or enumeration would exceed its configured size guard."""


class ConfigError(ValueError):
    """Invalid run configuration (CLI exit code 2)."""
