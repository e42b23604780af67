"""Exception types shared across the package.

Validation errors (bad inputs, malformed files) derive from ValueError;
numeric failures raised while a computation is underway derive from
NumericsError so callers can map them to a distinct exit status.
"""


class InvalidIntensities(ValueError):
    """Intensity vector violates a sign or balance constraint."""


class DegenerateModel(ValueError):
    """Intensities describe a degenerate system (no births, or pure death)."""


class NotDefinedForCritical(ValueError):
    """Quantity only exists for models with structural parameter < 1."""


class UndefinedAtOne(ValueError):
    """Estimator denominator vanishes when the observed state is 1."""


class TimeOutOfRange(ValueError):
    """Requested evaluation time lies outside a trajectory's horizon."""


class NumericsError(RuntimeError):
    """Base class for runtime numeric failures."""


class OdeFailure(NumericsError):
    """ODE integrator failed to converge or underflowed its step size."""


class TruncationTooSevere(NumericsError):
    """Truncated table drops more probability mass than the declared bound."""


class NormalizationDrift(NumericsError):
    """Probability table fails its normalization identity beyond tolerance."""


class StateOverflow(NumericsError):
    """Simulated population exceeded the configured state cap."""


class AllExcluded(NumericsError):
    """Every Monte Carlo replicate was excluded; no statistics available."""
