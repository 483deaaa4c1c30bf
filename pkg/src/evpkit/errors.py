"""Exception hierarchy shared by every evpkit module."""


class EvpError(Exception):
    """Base class for all evpkit errors."""


# curve validation / lookup
class CurveError(EvpError, ValueError):
    pass


class NonMonotoneEpsilon(CurveError):
    pass


class AccuracyOutOfRange(CurveError):
    pass


class MissingCleanPoint(CurveError):
    pass


class TooFewPoints(CurveError):
    pass


class OutOfDomain(CurveError):
    pass


# metrics
class MetricError(EvpError, ValueError):
    pass


class EmptyInterval(MetricError):
    pass


class OverlappingIntervals(MetricError):
    pass


class NoSampleInInterval(MetricError):
    pass


class ThresholdExceedsOne(MetricError):
    pass


class BoundExceedsCurve(MetricError):
    pass


class BudgetNotSampled(MetricError):
    pass


# sampling
class SamplingError(EvpError, ValueError):
    pass


class InvalidDelta(SamplingError):
    pass


class BudgetTooSmall(SamplingError):
    pass


class StepSizeViolation(SamplingError):
    """A PGD step is not strictly smaller than the sampling interval."""

    def __init__(self, step: float, spacing: float):
        self.step = step
        self.spacing = spacing
        super().__init__(
            f"PGD step {step!r} must be less than the sampling interval {spacing!r}"
        )


# attack lab
class LabError(EvpError, ValueError):
    pass


class InvalidSpec(LabError):
    pass


class InvalidConfig(LabError):
    pass


class DivergedLoss(EvpError, ArithmeticError):
    """Training produced a non-finite loss."""
