"""Robustness metrics computed from accuracy-perturbation curves.

Every metric returns a :class:`MetricReport` carrying the value together with
the parameters that produced it, so reports from different runs can be
compared or serialized without losing context.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Sequence

from .curve import (
    CrossingMode,
    NonMonotoneCurveWarning,
    PerturbationCurve,
    ViabilityThreshold,
    _as_tau,
    first_drop_index,
    viability_frontier,
)
from .errors import (
    BoundExceedsCurve,
    BudgetNotSampled,
    EmptyInterval,
    MetricError,
    NoSampleInInterval,
    OverlappingIntervals,
    ThresholdExceedsOne,
)

__all__ = [
    "MetricName",
    "MetricReport",
    "evp_trapezoid",
    "evp_refined",
    "interval_sum_robustness",
    "grid_intervals",
    "cohens_d_threshold",
    "ara",
    "roby",
    "adversarial_accuracy",
    "adversarial_accuracy_report",
    "viable_values",
]


class MetricName(str, Enum):
    EVP = "EVP"
    INTERVAL_SUM = "IntervalSum"
    ARA = "ARA"
    ROBY = "ROBY"
    ADV_ACCURACY = "AdvAccuracy"
    MEAN_MIN_PERTURBATION = "MeanMinPerturbation"


@dataclass(frozen=True)
class MetricReport:
    metric: MetricName
    value: float
    params: dict[str, Any] = field(default_factory=dict)
    curve_source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "metric", MetricName(self.metric))
        object.__setattr__(self, "value", float(self.value))

    def __float__(self) -> float:
        return self.value

    def to_dict(self) -> dict[str, Any]:
        return {
            "metric": self.metric.value,
            "value": self.value,
            "params": dict(self.params),
            "curve_source": self.curve_source,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        doc = json.loads(text)
        return cls(doc["metric"], doc["value"], doc.get("params", {}), doc.get("curve_source", ""))


def _max_spacing(curve: PerturbationCurve) -> float:
    e = curve.epsilons
    return max(b - a for a, b in zip(e, e[1:]))


def viable_values(curve: PerturbationCurve, tau: float | ViabilityThreshold) -> list[float]:
    """Thresholded functionality at each sample: accuracy if >= tau, else 0."""
    tau = _as_tau(tau)
    return [a if a >= tau else 0.0 for a in curve.accuracies]


def evp_trapezoid(curve: PerturbationCurve, tau: float | ViabilityThreshold) -> MetricReport:
    """Expected viable performance by the trapezoid rule over the sampled budgets.

    Each sample contributes its accuracy when it meets ``tau`` and zero
    otherwise, so the segment that straddles the threshold is a trapezoid
    falling to zero at its right end.
    """
    tau = _as_tau(tau)
    f = viable_values(curve, tau)
    eps = curve.epsilons
    total = 0.0
    for i in range(1, len(eps)):
        total += (f[i] + f[i - 1]) / 2.0 * (eps[i] - eps[i - 1])
    i = first_drop_index(curve, tau)
    if i is not None and any(a >= tau for a in curve.accuracies[i + 1 :]):
        warnings.warn(
            "accuracy recovers above tau after dropping below it; "
            "the trapezoid sum credits the later viable samples",
            NonMonotoneCurveWarning,
            stacklevel=2,
        )
    return MetricReport(
        MetricName.EVP,
        total,
        {
            "tau": tau,
            "variant": "trapezoid",
            "crossing_mode": CrossingMode.LAST_SAMPLE.value,
            "max_delta_eps": _max_spacing(curve),
        },
        curve.source,
    )


def _area_under(curve: PerturbationCurve, upper: float) -> float:
    """Exact integral of the linear interpolant over ``[0, upper]``."""
    eps, acc = curve.epsilons, curve.accuracies
    total = 0.0
    for i in range(1, len(eps)):
        e0, e1 = eps[i - 1], eps[i]
        if e0 >= upper:
            break
        if e1 <= upper:
            total += (acc[i - 1] + acc[i]) / 2.0 * (e1 - e0)
        else:
            a_up = acc[i - 1] + (acc[i] - acc[i - 1]) * (upper - e0) / (e1 - e0)
            total += (acc[i - 1] + a_up) / 2.0 * (upper - e0)
    return total


def evp_refined(curve: PerturbationCurve, tau: float | ViabilityThreshold) -> MetricReport:
    """Area under the interpolated curve up to its interpolated tau-crossing."""
    tau = _as_tau(tau)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonMonotoneCurveWarning)
        region = viability_frontier(curve, tau, CrossingMode.INTERPOLATED)
    return MetricReport(
        MetricName.EVP,
        _area_under(curve, region.d_tau),
        {
            "tau": tau,
            "variant": "refined",
            "crossing_mode": CrossingMode.INTERPOLATED.value,
            "d_tau": region.d_tau,
            "max_delta_eps": _max_spacing(curve),
        },
        curve.source,
    )


def grid_intervals(epsilons: Sequence[float]) -> list[tuple[float, float]]:
    """Consecutive ``(inf, sup)`` pairs of a sampling grid."""
    return [(float(a), float(b)) for a, b in zip(epsilons, epsilons[1:])]


def interval_sum_robustness(
    curve: PerturbationCurve,
    tau: float | ViabilityThreshold,
    intervals: Sequence[tuple[float, float]] | None = None,
) -> MetricReport:
    """Indicator-weighted sum of accuracy times interval width.

    For each interval the accuracy used is that of the sample with the
    largest budget that lies inside ``[inf, sup]``, i.e. the sample taken
    closest to the interval's bound without passing it.  ``intervals``
    defaults to the consecutive pairs of the curve's own grid.
    """
    tau = _as_tau(tau)
    if intervals is None:
        intervals = grid_intervals(curve.epsilons)
    intervals = [(float(lo), float(hi)) for lo, hi in intervals]
    if not intervals:
        raise MetricError("at least one interval is required")
    for lo, hi in intervals:
        if not hi > lo:
            raise EmptyInterval(f"interval [{lo!r}, {hi!r}] has no width")
    for (_, hi0), (lo1, _) in zip(intervals, intervals[1:]):
        if lo1 < hi0:
            raise OverlappingIntervals("intervals must be ordered and disjoint")
    eps, acc = curve.epsilons, curve.accuracies
    total = 0.0
    for lo, hi in intervals:
        inside = [i for i, e in enumerate(eps) if lo <= e <= hi]
        if not inside:
            raise NoSampleInInterval(f"no curve sample within [{lo!r}, {hi!r}]")
        a = acc[inside[-1]]
        if a >= tau:
            total += a * (hi - lo)
    return MetricReport(
        MetricName.INTERVAL_SUM,
        total,
        {"tau": tau, "n_intervals": len(intervals)},
        curve.source,
    )


def cohens_d_threshold(classes: int, d: float = 0.5) -> ViabilityThreshold:
    """Default threshold: chance accuracy plus ``d`` binomial standard deviations."""
    if int(classes) != classes or classes < 2:
        raise MetricError(f"classes must be an integer >= 2, got {classes!r}")
    if d < 0:
        raise MetricError(f"Cohen's d must be non-negative, got {d!r}")
    p = 1.0 / classes
    tau = p + d * math.sqrt(p * (1.0 - p))
    if tau > 1.0:
        raise ThresholdExceedsOne(f"classes={classes}, d={d} gives tau={tau!r} > 1")
    return ViabilityThreshold(tau)


def _positive_part_area(e0: float, g0: float, e1: float, g1: float) -> float:
    # integral of max(g, 0) for g linear between (e0, g0) and (e1, g1)
    h = e1 - e0
    if g0 >= 0 and g1 >= 0:
        return (g0 + g1) / 2.0 * h
    if g0 <= 0 and g1 <= 0:
        return 0.0
    pos = g0 if g0 > 0 else g1
    width = h * pos / (abs(g0) + abs(g1))
    return pos * width / 2.0


def ara(curve: PerturbationCurve, classes: int) -> MetricReport:
    """Area between the curve and the chance baseline ``1/classes``.

    Integrates the positive part of ``accuracy - 1/C`` over the full sampled
    range, splitting segments exactly where they cross the baseline.
    """
    if int(classes) != classes or classes < 2:
        raise MetricError(f"classes must be an integer >= 2, got {classes!r}")
    base = 1.0 / classes
    eps, acc = curve.epsilons, curve.accuracies
    total = 0.0
    for i in range(1, len(eps)):
        total += _positive_part_area(eps[i - 1], acc[i - 1] - base, eps[i], acc[i] - base)
    return MetricReport(MetricName.ARA, total, {"classes": int(classes)}, curve.source)


def roby(
    curve: PerturbationCurve, tau: float | ViabilityThreshold, plausible_bound: float
) -> MetricReport:
    """Fraction of ``[0, plausible_bound]`` before accuracy first drops below tau."""
    tau = _as_tau(tau)
    b = float(plausible_bound)
    if not b > 0:
        raise MetricError(f"plausible bound must be positive, got {b!r}")
    if b > curve.max_epsilon:
        raise BoundExceedsCurve(
            f"plausible bound {b!r} exceeds the curve's range {curve.max_epsilon!r}"
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonMonotoneCurveWarning)
        d = viability_frontier(curve, tau, CrossingMode.INTERPOLATED).d_tau
    return MetricReport(
        MetricName.ROBY,
        min(d, b) / b,
        {"tau": tau, "plausible_bound": b, "crossing_mode": CrossingMode.INTERPOLATED.value},
        curve.source,
    )


def adversarial_accuracy(curve: PerturbationCurve, epsilon: float) -> float:
    """Stored accuracy at a sampled budget; no interpolation."""
    epsilon = float(epsilon)
    for e, a in curve.points:
        if math.isclose(e, epsilon, rel_tol=1e-12, abs_tol=1e-15):
            return a
    raise BudgetNotSampled(f"budget {epsilon!r} is not one of the curve's samples")


def adversarial_accuracy_report(curve: PerturbationCurve, epsilon: float) -> MetricReport:
    return MetricReport(
        MetricName.ADV_ACCURACY,
        adversarial_accuracy(curve, epsilon),
        {"epsilon": float(epsilon)},
        curve.source,
    )
