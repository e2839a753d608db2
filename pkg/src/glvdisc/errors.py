"""Exception hierarchy shared across the package."""


class GlvdiscError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(GlvdiscError):
    """A config object violates its invariants (bad sizes, ranges, variances)."""


class IntegrationError(GlvdiscError):
    """The ODE solver could not produce a valid trajectory."""


class StepSizeUnderflow(IntegrationError):
    """Adaptive step control drove the step size below machine resolution."""


class NegativeStateError(IntegrationError):
    """A state component dropped below the negativity floor."""


class NoSolutionError(IntegrationError):
    """The implicit rate equation dx = c + d1*|dx| has no real solution."""


class PredictiveError(GlvdiscError):
    """Too many posterior draws failed to integrate."""


class SweepError(GlvdiscError):
    """More than the tolerated fraction of sweep realizations failed."""
