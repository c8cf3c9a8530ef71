"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Input data violates a documented invariant."""


class PreconditionError(ValueError):
    """Operation called outside its domain (e.g. singular frequency matrix)."""


class ConvergenceError(ArithmeticError):
    """Iterative routine did not converge within its sweep budget."""


class ConfigError(ValueError):
    """Experiment configuration is invalid or requests an unsupported combination."""
