"""Exception types shared across the package."""


class DomainError(ValueError):
    """An input lies outside the domain of the operation (non-finite, out of range)."""


class PreconditionError(ValueError):
    """A mathematical precondition of the operation does not hold."""


class UnsupportedOperationError(NotImplementedError):
    """The requested operation is not available for this family or parameter set."""


class DegenerateWeightsError(RuntimeError):
    """Importance weights collapsed below the effective-sample-size threshold."""

    def __init__(self, message, ess=None, n=None):
        super().__init__(message)
        self.ess = ess
        self.n = n


class NumericalError(RuntimeError):
    """A numerical routine failed to converge or returned non-finite output."""


class NoApplicableBoundError(RuntimeError):
    """None of the hypotheses needed for a bound are available."""


class DivergenceError(RuntimeError):
    """A simulated chain left the finite region."""

    def __init__(self, message, chain=None, step=None, norm=None):
        super().__init__(message)
        self.chain = chain
        self.step = step
        self.norm = norm


class StudyError(RuntimeError):
    """A bias-scaling study could not be completed."""


class ConfigError(ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, message, path=""):
        super().__init__(message)
        self.path = path
