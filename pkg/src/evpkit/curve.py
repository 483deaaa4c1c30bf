"""Accuracy-perturbation curves.

A curve is an ordered set of ``(epsilon, accuracy)`` samples starting at the
clean point ``epsilon = 0``.  Between samples the curve is treated as
piecewise linear, which is the model the trapezoid rule integrates exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_write_text
from .errors import (
    AccuracyOutOfRange,
    CurveError,
    MissingCleanPoint,
    NonMonotoneEpsilon,
    OutOfDomain,
    TooFewPoints,
)

__all__ = [
    "NormLabel",
    "CrossingMode",
    "PerturbationCurve",
    "ViabilityThreshold",
    "ViableRegion",
    "NonMonotoneCurveWarning",
    "validate",
    "interpolate",
    "viability_frontier",
    "first_drop_index",
    "read_curve",
    "write_curve",
    "curve_to_csv",
    "curve_from_csv",
    "curve_to_json",
    "curve_from_json",
]


class NormLabel(str, Enum):
    L2 = "L2"
    LINF = "Linf"


class CrossingMode(str, Enum):
    LAST_SAMPLE = "LastSample"
    INTERPOLATED = "Interpolated"


class NonMonotoneCurveWarning(UserWarning):
    """Accuracy climbs back above tau after first dropping below it."""


@dataclass(frozen=True)
class ViabilityThreshold:
    tau: float

    def __post_init__(self):
        tau = float(self.tau)
        if not (0.0 < tau <= 1.0):
            raise ValueError(f"viability threshold must lie in (0, 1], got {tau!r}")
        object.__setattr__(self, "tau", tau)

    def __float__(self) -> float:
        return self.tau


def _as_tau(tau: float | ViabilityThreshold) -> float:
    if isinstance(tau, ViabilityThreshold):
        return tau.tau
    return ViabilityThreshold(tau).tau


@dataclass(frozen=True)
class ViableRegion:
    d_tau: float
    crossing_mode: CrossingMode


@dataclass(frozen=True)
class PerturbationCurve:
    """Validated accuracy-perturbation samples.

    Build instances through :func:`validate` (or the readers) rather than
    directly; the constructor re-checks the invariants either way.
    ``mean_actual_norms`` optionally records, per budget, the mean norm of the
    perturbations the attack actually produced.
    """

    epsilons: tuple[float, ...]
    accuracies: tuple[float, ...]
    norm_label: NormLabel = NormLabel.L2
    scale_note: str | None = None
    sample_counts: tuple[int, ...] | None = None
    source: str = "external"
    mean_actual_norms: tuple[float, ...] | None = field(default=None, compare=True)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        acc = tuple(float(a) for a in self.accuracies)
        if len(eps) != len(acc):
            raise CurveError("epsilons and accuracies differ in length")
        _check_points(eps, acc)
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "accuracies", acc)
        object.__setattr__(self, "norm_label", NormLabel(self.norm_label))
        for name in ("sample_counts", "mean_actual_norms"):
            extra = getattr(self, name)
            if extra is None:
                continue
            extra = tuple(int(v) for v in extra) if name == "sample_counts" else tuple(
                float(v) for v in extra
            )
            if len(extra) != len(eps):
                raise CurveError(f"{name} must have one entry per point")
            if name == "sample_counts" and any(v <= 0 for v in extra):
                raise CurveError("sample counts must be positive")
            object.__setattr__(self, name, extra)

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.epsilons, self.accuracies))

    @property
    def max_epsilon(self) -> float:
        return self.epsilons[-1]

    @property
    def clean_accuracy(self) -> float:
        return self.accuracies[0]

    def __len__(self) -> int:
        return len(self.epsilons)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.epsilons), np.asarray(self.accuracies)

    def scaled(self, k: float) -> "PerturbationCurve":
        """Same curve with every epsilon multiplied by ``k > 0``."""
        if not k > 0:
            raise ValueError("scale factor must be positive")
        norms = None
        if self.mean_actual_norms is not None:
            norms = tuple(k * v for v in self.mean_actual_norms)
        return PerturbationCurve(
            tuple(k * e for e in self.epsilons),
            self.accuracies,
            self.norm_label,
            self.scale_note,
            self.sample_counts,
            self.source,
            norms,
        )


def _check_points(eps: Sequence[float], acc: Sequence[float]) -> None:
    for a in acc:
        if not (0.0 <= a <= 1.0):
            raise AccuracyOutOfRange(f"accuracy {a!r} outside [0, 1]")
    for e in eps:
        if not math.isfinite(e) or e < 0:
            raise NonMonotoneEpsilon(f"epsilon {e!r} is not a finite non-negative real")
    for prev, cur in zip(eps, eps[1:]):
        if not cur > prev:
            raise NonMonotoneEpsilon(f"epsilons must increase strictly ({prev!r} then {cur!r})")
    if not eps or eps[0] != 0.0:
        raise MissingCleanPoint("first point must be the clean point epsilon = 0")
    if len(eps) < 2:
        raise TooFewPoints("a curve needs at least two points")


def validate(
    raw_points: Iterable[Sequence[float]],
    *,
    norm_label: NormLabel | str = NormLabel.L2,
    scale_note: str | None = None,
    sample_counts: Sequence[int] | None = None,
    source: str = "external",
    mean_actual_norms: Sequence[float] | None = None,
) -> PerturbationCurve:
    """Turn raw ``(epsilon, accuracy)`` pairs into a :class:`PerturbationCurve`.

    Raises AccuracyOutOfRange, NonMonotoneEpsilon, MissingCleanPoint or
    TooFewPoints, checked in that order.
    """
    pts = [tuple(p) for p in raw_points]
    for p in pts:
        if len(p) != 2:
            raise CurveError(f"expected (epsilon, accuracy) pairs, got {p!r}")
    eps = [float(p[0]) for p in pts]
    acc = [float(p[1]) for p in pts]
    return PerturbationCurve(
        tuple(eps),
        tuple(acc),
        NormLabel(norm_label),
        scale_note,
        None if sample_counts is None else tuple(sample_counts),
        source,
        None if mean_actual_norms is None else tuple(mean_actual_norms),
    )


def interpolate(curve: PerturbationCurve, epsilon: float) -> float:
    """Piecewise-linear accuracy at ``epsilon``; sample values are returned exactly."""
    epsilon = float(epsilon)
    if not (0.0 <= epsilon <= curve.max_epsilon):
        raise OutOfDomain(f"epsilon {epsilon!r} outside [0, {curve.max_epsilon!r}]")
    eps, acc = curve.epsilons, curve.accuracies
    i = int(np.searchsorted(eps, epsilon, side="left"))
    if eps[i] == epsilon:
        return acc[i]
    e0, e1 = eps[i - 1], eps[i]
    t = (epsilon - e0) / (e1 - e0)
    return acc[i - 1] + (acc[i] - acc[i - 1]) * t


def first_drop_index(curve: PerturbationCurve, tau: float | ViabilityThreshold) -> int | None:
    """Index of the first sample with accuracy strictly below ``tau``, or None."""
    tau = _as_tau(tau)
    for i, a in enumerate(curve.accuracies):
        if a < tau:
            return i
    return None


def _crossing_abscissa(e0: float, a0: float, e1: float, a1: float, tau: float) -> float:
    # a0 >= tau > a1 on this segment
    t = (a0 - tau) / (a0 - a1)
    return e0 + t * (e1 - e0)


def viability_frontier(
    curve: PerturbationCurve,
    tau: float | ViabilityThreshold,
    mode: CrossingMode | str = CrossingMode.INTERPOLATED,
) -> ViableRegion:
    """Smallest budget at which accuracy first drops below ``tau``.

    With ``LastSample`` this is the last sampled budget before the first
    sub-threshold sample; with ``Interpolated`` it is where the linear
    interpolant crosses ``tau``.  A curve that never drops below ``tau``
    yields its maximum epsilon.  Curves that become viable again after the
    first drop trigger :class:`NonMonotoneCurveWarning`; the later viable
    stretches are ignored.
    """
    tau = _as_tau(tau)
    mode = CrossingMode(mode)
    i = first_drop_index(curve, tau)
    if i is None:
        return ViableRegion(curve.max_epsilon, mode)
    if i == 0:
        return ViableRegion(0.0, mode)
    if any(a >= tau for a in curve.accuracies[i + 1 :]):
        warnings.warn(
            f"accuracy recovers above tau={tau} after first dropping below it; "
            "later viable budgets are ignored",
            NonMonotoneCurveWarning,
            stacklevel=2,
        )
    eps, acc = curve.epsilons, curve.accuracies
    if mode is CrossingMode.LAST_SAMPLE:
        return ViableRegion(eps[i - 1], mode)
    return ViableRegion(_crossing_abscissa(eps[i - 1], acc[i - 1], eps[i], acc[i], tau), mode)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

CSV_HEADER = ("epsilon", "accuracy")


def curve_to_csv(curve: PerturbationCurve) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    with_counts = curve.sample_counts is not None
    writer.writerow(CSV_HEADER + (("n_samples",) if with_counts else ()))
    for i, (e, a) in enumerate(curve.points):
        row = [repr(e), repr(a)]
        if with_counts:
            row.append(str(curve.sample_counts[i]))
        writer.writerow(row)
    return buf.getvalue()


def curve_from_csv(text: str, *, norm_label=NormLabel.L2, source: str = "external") -> PerturbationCurve:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise CurveError("empty curve CSV")
    header = tuple(h.strip() for h in rows[0])
    if header[:2] != CSV_HEADER or len(header) > 3 or (len(header) == 3 and header[2] != "n_samples"):
        raise CurveError(f"unexpected curve CSV header {','.join(header)!r}")
    body = [r for r in rows[1:] if r]
    points = [(float(r[0]), float(r[1])) for r in body]
    counts = [int(r[2]) for r in body] if len(header) == 3 else None
    return validate(points, norm_label=norm_label, sample_counts=counts, source=source)


def curve_to_json(curve: PerturbationCurve) -> str:
    pts = []
    for i, (e, a) in enumerate(curve.points):
        p = {"epsilon": e, "accuracy": a}
        if curve.sample_counts is not None:
            p["n_samples"] = curve.sample_counts[i]
        if curve.mean_actual_norms is not None:
            p["mean_actual_norm"] = curve.mean_actual_norms[i]
        pts.append(p)
    doc = {"norm_label": curve.norm_label.value, "source": curve.source, "points": pts}
    if curve.scale_note is not None:
        doc["scale_note"] = curve.scale_note
    return json.dumps(doc, indent=2) + "\n"


def curve_from_json(text: str) -> PerturbationCurve:
    doc = json.loads(text)
    pts = doc["points"]

    def column(key):
        if pts and all(key in p for p in pts):
            return [p[key] for p in pts]
        return None

    return validate(
        [(p["epsilon"], p["accuracy"]) for p in pts],
        norm_label=doc.get("norm_label", "L2"),
        scale_note=doc.get("scale_note"),
        sample_counts=column("n_samples"),
        source=doc.get("source", "external"),
        mean_actual_norms=column("mean_actual_norm"),
    )


def read_curve(path: str | Path) -> PerturbationCurve:
    """Load a curve from ``.json`` (envelope) or anything else as CSV."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return curve_from_json(text)
    return curve_from_csv(text, source=path.stem)


def write_curve(curve: PerturbationCurve, path: str | Path) -> None:
    """Write ``curve`` atomically, as JSON for ``.json`` paths and CSV otherwise."""
    path = Path(path)
    text = curve_to_json(curve) if path.suffix.lower() == ".json" else curve_to_csv(curve)
    atomic_write_text(path, text)
