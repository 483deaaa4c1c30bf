"""Budget sweeps and minimum-perturbation search over a test split."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..curve import NormLabel, PerturbationCurve, validate
from ..errors import InvalidConfig
from ..metrics import MetricName, MetricReport
from ..sampling import SamplingPlan, check_step_size, uniform_grid
from .data import Dataset, Split
from .model import MlpModel
from .pgd import PgdConfig, perturbation_norm, pgd_attack_batch


def _require_test(dataset: Dataset) -> None:
    if dataset.split is not Split.TEST:
        raise InvalidConfig("attacks are evaluated on the Test split")


def budget_sweep(
    model: MlpModel,
    dataset: Dataset,
    plan: SamplingPlan,
    pgd_template: PgdConfig,
    source: str = "attacklab",
) -> PerturbationCurve:
    """Adversarial accuracy of ``model`` at every budget of ``plan``.

    Budgets are attacked in increasing order and each attack warm-starts from
    the previous budget's adversarial points (``random_start`` only affects
    the first non-zero budget).  A point fooled at a smaller budget stays
    fooled, since that example also lies inside every larger ball, so the
    resulting accuracies never increase.

    Unless the template fixes ``iterations``, each budget runs
    ``ceil(2 * (eps_i - eps_{i-1}) / step)`` iterations: the usual
    ``2 * eps / step`` rule measured from the warm-start ball.
    """
    _require_test(dataset)
    check_step_size(pgd_template.step, plan.min_spacing)
    x, y = dataset.inputs, dataset.labels
    n = len(y)
    adv = x.copy()
    correct = model.predict(x) == y
    accs = [np.count_nonzero(correct) / n]
    norms = [0.0]
    for k, eps in enumerate(plan.epsilons[1:]):
        cfg = pgd_template.at_budget(eps)
        if pgd_template.iterations is None:
            grow = eps - plan.epsilons[k]
            cfg = replace(cfg, iterations=max(1, math.ceil(2 * grow / cfg.step)))
        new = pgd_attack_batch(model, x, y, cfg, init=adv if k else None)
        new_correct = model.predict(new) == y
        keep_old = ~correct & new_correct
        new[keep_old] = adv[keep_old]
        new_correct[keep_old] = False
        adv, correct = new, new_correct
        accs.append(np.count_nonzero(correct) / n)
        norms.append(float(perturbation_norm(adv - x, cfg.norm).mean()))
    return validate(
        list(zip(plan.epsilons, accs)),
        norm_label=pgd_template.norm,
        sample_counts=[n] * len(accs),
        source=source,
        mean_actual_norms=norms,
    )


@dataclass(frozen=True)
class MinPerturbationResult:
    distances: np.ndarray  # nan where the clean prediction is already wrong
    censored: np.ndarray
    budgets: tuple[float, ...]


def min_perturbation_distances(
    model: MlpModel,
    dataset: Dataset,
    norm: NormLabel | str = NormLabel.L2,
    step: float = 0.05,
    max_budget: float = 2.0,
    pgd_step: float | None = None,
    iterations: int | None = None,
) -> MinPerturbationResult:
    """Per-point smallest searched budget at which PGD flips the prediction.

    Budgets grow ``step, 2*step, ...`` up to ``max_budget``; every budget
    warm-starts from the previous one.  Points never flipped are censored at
    ``max_budget``.  The inner PGD step defaults to ``step / 4``.
    """
    _require_test(dataset)
    if not (step > 0 and max_budget > 0):
        raise InvalidConfig("search step and max budget must be positive")
    norm = NormLabel(norm)
    pgd_step = step / 4 if pgd_step is None else pgd_step
    budgets = uniform_grid(max_budget, min(step, max_budget)).epsilons[1:]
    x, y = dataset.inputs, dataset.labels
    dist = np.full(len(y), np.nan)
    active = np.flatnonzero(model.predict(x) == y)
    adv = x.copy()
    for eps in budgets:
        if active.size == 0:
            break
        cfg = PgdConfig(norm, eps, min(pgd_step, eps / 2), iterations, 0, False)
        out = pgd_attack_batch(model, x[active], y[active], cfg, init=adv[active])
        adv[active] = out
        flipped = model.predict(out) != y[active]
        dist[active[flipped]] = eps
        active = active[~flipped]
    censored = np.zeros(len(y), dtype=bool)
    censored[active] = True
    dist[active] = max_budget
    return MinPerturbationResult(dist, censored, tuple(budgets))


def mean_min_perturbation(
    model: MlpModel,
    dataset: Dataset,
    norm: NormLabel | str = NormLabel.L2,
    step: float = 0.05,
    max_budget: float = 2.0,
    pgd_step: float | None = None,
    iterations: int | None = None,
    source: str = "attacklab",
) -> MetricReport:
    """Mean flip distance over correctly classified points, censored ones at ``max_budget``."""
    res = min_perturbation_distances(model, dataset, norm, step, max_budget, pgd_step, iterations)
    evaluated = ~np.isnan(res.distances)
    n_eval = int(evaluated.sum())
    value = float(res.distances[evaluated].mean()) if n_eval else 0.0
    return MetricReport(
        MetricName.MEAN_MIN_PERTURBATION,
        value,
        {
            "norm": NormLabel(norm).value,
            "step": float(step),
            "max_budget": float(max_budget),
            "n_evaluated": n_eval,
            "n_excluded": int(len(res.distances) - n_eval),
            "censored": int(res.censored.sum()),
        },
        source,
    )
