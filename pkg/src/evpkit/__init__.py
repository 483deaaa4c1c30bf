"""Expected viable performance and related robustness metrics."""

from .curve import (
    CrossingMode,
    NormLabel,
    PerturbationCurve,
    ViabilityThreshold,
    ViableRegion,
    interpolate,
    read_curve,
    validate,
    viability_frontier,
    write_curve,
)
from .metrics import (
    MetricName,
    MetricReport,
    adversarial_accuracy,
    ara,
    cohens_d_threshold,
    evp_refined,
    evp_trapezoid,
    interval_sum_robustness,
    roby,
)
from .sampling import SamplingPlan, adaptive_grid, convergence_study, uniform_grid

__version__ = "0.1.0"

__all__ = [
    "CrossingMode",
    "NormLabel",
    "PerturbationCurve",
    "ViabilityThreshold",
    "ViableRegion",
    "interpolate",
    "read_curve",
    "validate",
    "viability_frontier",
    "write_curve",
    "MetricName",
    "MetricReport",
    "adversarial_accuracy",
    "ara",
    "cohens_d_threshold",
    "evp_refined",
    "evp_trapezoid",
    "interval_sum_robustness",
    "roby",
    "SamplingPlan",
    "adaptive_grid",
    "convergence_study",
    "uniform_grid",
]
