"""Exception hierarchy for tracedensity.

Plain argument misuse (bad dimensions, out-of-range ids, k larger than the
corpus) raises ``ValueError``; everything domain-specific derives from
:class:`TraceDensityError` so callers can catch the whole family.
"""


class TraceDensityError(Exception):
    """Base class for all tracedensity errors."""


class IngestionError(TraceDensityError):
    """Raised when raw text cannot be turned into a usable corpus."""


class ValidationError(TraceDensityError):
    """Raised when a model, density, or file violates a structural invariant."""


class ConstraintError(ValidationError):
    """Raised when a density-constraint precondition is not met."""


class FixedPointError(TraceDensityError):
    """Fixed-point iteration failed to reach the requested residual.

    Carries the best iterate seen so callers can inspect or reuse it.
    """

    def __init__(self, message, best=None, residual=None, iterations=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class ProjectionError(TraceDensityError):
    """Raised when the isometry projection hits a rank-deficient stack."""


class StepError(TraceDensityError):
    """Raised when a manifold retraction fails; the caller should reduce the
    learning rate."""


class LikelihoodError(TraceDensityError):
    """Raised when a phrase with zero probability enters a likelihood."""


class UndefinedConditionalError(TraceDensityError):
    """Raised when conditioning on a prefix with zero probability."""


class SamplingError(TraceDensityError):
    """Raised when sampling runs into an undefined conditional."""


class TrainingError(TraceDensityError):
    """Training aborted; carries the report accumulated so far."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
