"""Exception hierarchy shared across the package."""


class TailIndexError(Exception):
    """Base class for all library errors."""


class ModelError(TailIndexError, ValueError):
    """Invalid distribution parameters."""


class ConvergenceError(TailIndexError, RuntimeError):
    """A root finder hit its iteration cap."""


class EstimationError(TailIndexError):
    """An estimator could not produce a finite value on this sample."""


class EmptyTail(EstimationError):
    """The tail event needed by the estimator has no observations."""


class DegenerateSpacing(EstimationError):
    """Two order statistics used as thresholds coincide."""


class InvalidBase(EstimationError):
    """The reference order statistic is not above 1, so its log is not positive."""


class DegenerateEstimate(EstimationError):
    """A pilot estimate is zero, so a plug-in threshold is undefined."""


class NoAdmissibleK(EstimationError):
    """No threshold index clears the count floor of the adaptive rule."""


class TooSmallN(TailIndexError, ValueError):
    """The sample size is too small for the lower-bound construction.

    ``condition`` names the check that failed.
    """

    def __init__(self, condition, message=""):
        self.condition = condition
        super().__init__(f"{condition}: {message}" if message else condition)


class SupportMismatch(TailIndexError, ValueError):
    """KL(p, q) is infinite because p puts mass where q does not."""


class InsufficientData(TailIndexError, ValueError):
    """Not enough sample sizes or trials to fit a rate."""
