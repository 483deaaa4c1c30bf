"""Budget grids and the trapezoid convergence study."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .curve import PerturbationCurve, ViabilityThreshold, _as_tau
from .errors import BudgetTooSmall, InvalidDelta, SamplingError, StepSizeViolation
from .metrics import evp_trapezoid

__all__ = [
    "Strategy",
    "SamplingPlan",
    "ConvergenceRow",
    "ConvergenceReport",
    "uniform_grid",
    "adaptive_grid",
    "convergence_study",
    "check_step_size",
    "TAU_BAND",
    "DEFAULT_TOLERANCE",
]

# accuracy half-width around tau that earns a segment the proximity bonus
TAU_BAND = 0.05
DEFAULT_TOLERANCE = 0.01


class Strategy(str, Enum):
    UNIFORM = "Uniform"
    ADAPTIVE = "Adaptive"


@dataclass(frozen=True)
class SamplingPlan:
    epsilons: tuple[float, ...]
    strategy: Strategy
    max_epsilon: float
    delta: float | None = None

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or eps[0] != 0.0:
            raise SamplingError("a sampling plan starts at epsilon = 0")
        if any(b <= a for a, b in zip(eps, eps[1:])):
            raise SamplingError("plan epsilons must increase strictly")
        if eps[-1] != float(self.max_epsilon):
            raise SamplingError("last plan epsilon must equal max_epsilon")
        object.__setattr__(self, "epsilons", eps)
        object.__setattr__(self, "strategy", Strategy(self.strategy))

    def __len__(self) -> int:
        return len(self.epsilons)

    @property
    def min_spacing(self) -> float:
        e = self.epsilons
        return min((b - a for a, b in zip(e, e[1:])), default=math.inf)


def uniform_grid(max_epsilon: float, delta: float) -> SamplingPlan:
    """``0, delta, 2*delta, ...`` closed off exactly at ``max_epsilon``.

    Grid points are ``k * delta`` (not a running sum).  A final point closer
    than a relative 1e-9 of ``delta`` to ``max_epsilon`` is snapped onto it;
    otherwise a shorter last interval is appended.
    """
    max_epsilon, delta = float(max_epsilon), float(delta)
    if not (math.isfinite(delta) and 0 < delta <= max_epsilon):
        raise InvalidDelta(f"delta must satisfy 0 < delta <= {max_epsilon!r}, got {delta!r}")
    snap = 1e-9 * delta
    n = int(math.floor(max_epsilon / delta + 1e-9))
    eps = [k * delta for k in range(n + 1)]
    if abs(eps[-1] - max_epsilon) <= snap:
        eps[-1] = max_epsilon
    else:
        eps.append(max_epsilon)
    return SamplingPlan(tuple(eps), Strategy.UNIFORM, max_epsilon, delta)


def _segment_priorities(curve: PerturbationCurve, tau: float) -> np.ndarray:
    acc = np.asarray(curve.accuracies)
    lo = np.minimum(acc[:-1], acc[1:])
    hi = np.maximum(acc[:-1], acc[1:])
    bonus = ((hi >= tau - TAU_BAND) & (lo <= tau + TAU_BAND)).astype(float)
    return np.abs(np.diff(acc)) + bonus


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    quotas = weights / weights.sum() * total
    alloc = np.floor(quotas).astype(int)
    short = total - int(alloc.sum())
    # stable sort keeps earlier segments first among equal remainders
    order = np.argsort(-(quotas - alloc), kind="stable")
    alloc[order[:short]] += 1
    return alloc


def adaptive_grid(
    curve: PerturbationCurve, tau: float | ViabilityThreshold, budget_points: int
) -> SamplingPlan:
    """Refine a pilot curve's grid where accuracy moves fast or sits near tau.

    Each pilot segment scores ``|delta accuracy|`` plus 1 when its accuracy
    range touches ``[tau - 0.05, tau + 0.05]``.  The ``budget_points - len(curve)``
    extra points are shared out in proportion to the scores (equal shares if
    every score is zero) and spaced evenly inside their segment.
    """
    tau = _as_tau(tau)
    budget_points = int(budget_points)
    extra = budget_points - len(curve)
    if extra < 0:
        raise BudgetTooSmall(
            f"budget of {budget_points} points is smaller than the pilot's {len(curve)}"
        )
    eps = curve.epsilons
    new = list(eps)
    if extra:
        prio = _segment_priorities(curve, tau)
        if prio.sum() <= 0:
            prio = np.ones_like(prio)
        alloc = _largest_remainder(prio, extra)
        for i, k in enumerate(alloc):
            e0, e1 = eps[i], eps[i + 1]
            new.extend(e0 + (e1 - e0) * j / (k + 1) for j in range(1, k + 1))
        new = sorted(set(new))
    return SamplingPlan(tuple(new), Strategy.ADAPTIVE, eps[-1])


def check_step_size(step: float, spacing: float) -> None:
    if not step < spacing:
        raise StepSizeViolation(step, spacing)


@dataclass(frozen=True)
class ConvergenceRow:
    delta_eps: float
    evp: float
    relative_change: float | None


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple[ConvergenceRow, ...]
    stable_at: float | None
    tolerance: float
    tau: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["delta_eps", "evp", "relative_change"])
        for r in self.rows:
            rc = "" if r.relative_change is None else repr(r.relative_change)
            w.writerow([repr(r.delta_eps), repr(r.evp), rc])
        return buf.getvalue()


def _relative_change(new: float, old: float) -> float:
    if old == 0.0:
        return 0.0 if new == 0.0 else math.inf
    return abs(new - old) / abs(old)


def convergence_study(
    sweep_fn: Callable[[SamplingPlan], PerturbationCurve],
    tau: float | ViabilityThreshold,
    max_epsilon: float,
    deltas: Sequence[float],
    tolerance: float = DEFAULT_TOLERANCE,
    pgd_step: float | None = None,
) -> ConvergenceReport:
    """EVP (trapezoid) on successively finer uniform grids.

    ``stable_at`` is the coarsest spacing after which every further
    refinement changes EVP by less than ``tolerance`` (relative); ``None``
    when no such spacing exists among the studied ones.
    """
    tau = _as_tau(tau)
    deltas = [float(d) for d in deltas]
    if len(deltas) < 2:
        raise SamplingError("a convergence study needs at least two spacings")
    if any(b >= a for a, b in zip(deltas, deltas[1:])):
        raise SamplingError("deltas must be strictly decreasing")
    if pgd_step is not None:
        for d in deltas:
            check_step_size(pgd_step, d)
    plans = [uniform_grid(max_epsilon, d) for d in deltas]

    rows: list[ConvergenceRow] = []
    for d, plan in zip(deltas, plans):
        value = evp_trapezoid(sweep_fn(plan), tau).value
        rc = None if not rows else _relative_change(value, rows[-1].evp)
        rows.append(ConvergenceRow(d, value, rc))

    stable_at = None
    for i in range(len(rows) - 2, -1, -1):
        if rows[i + 1].relative_change < tolerance:
            stable_at = rows[i].delta_eps
        else:
            break
    return ConvergenceReport(tuple(rows), stable_at, float(tolerance), tau)
