"""Exception hierarchy shared across the package."""


class EbregError(Exception):
    """Base class for all package-specific errors."""


class IngestionError(EbregError):
    """Raised when a dataset file cannot be parsed into a valid Dataset."""


class WhiteningError(EbregError):
    """Raised when a computation requires a whitened design and the input is not."""


class SingularDesignError(EbregError):
    """Raised when the design matrix is (numerically) rank deficient."""

    def __init__(self, message, numerical_rank=None):
        super().__init__(message)
        self.numerical_rank = numerical_rank


class GroupStructureError(EbregError):
    """Raised when a group layout does not partition the feature indices."""


class UnsupportedClosedFormError(EbregError):
    """Raised when no closed-form evidence exists for the requested model size."""


class QuadratureConvergenceError(EbregError):
    """Raised when the quadrature oracle cannot reach the requested tolerance."""

    def __init__(self, message, achieved=None, log_value=None):
        super().__init__(message)
        self.achieved = achieved
        self.log_value = log_value


class QuasiconcavityError(EbregError):
    """Raised when an evidence scan contradicts unimodality.

    Carries the offending (lambda, log_z) triple so the counterexample can be
    inspected rather than silently ignored.
    """

    def __init__(self, message, triple):
        super().__init__(message)
        self.triple = triple


class MonteCarloError(EbregError):
    """Raised on degenerate Monte Carlo aggregation."""
