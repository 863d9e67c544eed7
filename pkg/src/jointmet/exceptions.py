"""Exception types shared across the package."""


class FitConvergenceError(RuntimeError):
    """An optimizer failed to converge after all configured restarts."""


class InvariantViolation(RuntimeError):
    """A post-computation consistency check on emitted results failed."""
