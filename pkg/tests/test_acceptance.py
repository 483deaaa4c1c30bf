"""Acceptance criteria 1-8, each reported as one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the lines appear in the
terminal summary (and on stdout with ``-s``).
"""

import csv
import io
import math
import warnings

import numpy as np
import pytest

from evpkit.cli import main
from evpkit.curve import NonMonotoneCurveWarning, curve_to_csv, validate, write_curve
from evpkit.lab import (
    GeneratorSpec,
    MlpModel,
    PgdConfig,
    TrainConfig,
    accuracy,
    generate_dataset,
    gradient,
    min_perturbation_distances,
    perturbation_norm,
    pgd_attack_batch,
    train,
)
from evpkit.lab import scenario as S
from evpkit.lab.sweep import budget_sweep
from evpkit.metrics import ara, cohens_d_threshold, evp_refined, evp_trapezoid
from evpkit.sampling import convergence_study, uniform_grid

from .oracles import dense_integral, first_crossing, random_curve

RESULTS: list[str] = []


def report(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


@pytest.fixture(scope="module")
def lab():
    sc = S.build(["natural", "moderate", "large"])
    curves = {n: S.sweep(sc, n) for n in sc.models}
    return sc, curves


def test_criterion_1_cohens_d_table():
    expected = {2: 0.75, 5: 0.40, 10: 0.25, 100: 0.06, 1000: 0.017}
    tol_pp = {2: 1e-12, 5: 1e-12, 10: 1e-12, 100: 0.0005, 1000: 0.0005}
    got = {c: cohens_d_threshold(c, 0.5).tau for c in expected}
    ok = all(abs(got[c] - expected[c]) <= tol_pp[c] for c in expected)
    report(1, ok, "tau by class count " + ", ".join(f"{c}:{got[c]:.6f}" for c in expected))


def test_criterion_2_quadrature_oracles():
    rng = np.random.default_rng(2024)
    worst_trap = worst_ref = 0.0
    for _ in range(100):
        curve, tau = random_curve(rng)
        eps, acc = curve.epsilons, curve.accuracies
        f = [a if a >= tau else 0.0 for a in acc]
        riemann = math.fsum((f[i] + f[i - 1]) / 2 * (eps[i] - eps[i - 1]) for i in range(1, len(eps)))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMonotoneCurveWarning)
            trap = evp_trapezoid(curve, tau).value
            ref = evp_refined(curve, tau).value
        fine = dense_integral(curve, 0.0, first_crossing(curve, tau))
        if riemann or trap:
            worst_trap = max(worst_trap, rel(trap, riemann))
        if fine or ref:
            worst_ref = max(worst_ref, rel(ref, fine))
    ok = worst_trap < 1e-12 and worst_ref < 1e-6
    report(2, ok, f"worst trapezoid rel err {worst_trap:.2e}, worst refined rel err {worst_ref:.2e}")


@pytest.mark.slow
def test_criterion_3_convergence(lab):
    sc, _ = lab
    model = sc.models[S.CONVERGENCE_MODEL]
    template = PgdConfig("L2", 0.0, S.CONVERGENCE_STEP)
    rep = convergence_study(
        lambda plan: budget_sweep(model, sc.test_set, plan, template),
        S.CONVERGENCE_TAU,
        S.MAX_EPSILON,
        S.CONVERGENCE_DELTAS,
        tolerance=0.01,
        pgd_step=S.CONVERGENCE_STEP,
    )
    changes = [(r.delta_eps, r.relative_change) for r in rep.rows[1:]]
    after = [c for d, c in changes if rep.stable_at is not None and d < rep.stable_at]
    ok = rep.stable_at is not None and bool(after) and all(c < 0.01 for c in after)
    detail = ", ".join(f"{d}:{c:.4f}" for d, c in changes)
    report(3, ok, f"stable_at={rep.stable_at}, relative changes {detail}")


def test_criterion_4_evp_ara_bridge():
    rng = np.random.default_rng(4)
    worst = 0.0
    for trial in range(200):
        classes = int(rng.choice([2, 3, 5, 10, 100]))
        base = 1 / classes
        n = int(rng.integers(3, 12))
        k = int(rng.integers(1, n))  # samples 0..k-1 above baseline, k.. below
        eps = np.concatenate([[0.0], np.cumsum(rng.uniform(0.05, 0.6, n - 1))])
        acc = np.concatenate([rng.uniform(base + 1e-3, 1.0, k), rng.uniform(0.0, base - 1e-4, n - k)])
        curve = validate(list(zip(eps, acc)))
        e0, a0, e1, a1 = eps[k - 1], acc[k - 1], eps[k], acc[k]
        d_star = e0 + (e1 - e0) * (a0 - base) / (a0 - a1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NonMonotoneCurveWarning)
            diff = evp_refined(curve, base).value - ara(curve, classes).value
        worst = max(worst, rel(diff, base * d_star))
    report(4, worst < 1e-9, f"worst rel err of evp_refined - ara vs delta*/C over 200 curves: {worst:.2e}")


@pytest.mark.slow
def test_criterion_5_training_tradeoff(lab):
    sc, curves = lab
    evp = {n: evp_trapezoid(c, S.HIGH_TAU).value for n, c in curves.items()}
    clean = {n: accuracy(m, sc.test_set) for n, m in sc.models.items()}
    ok = evp["moderate"] > evp["large"] and clean["natural"] > max(clean["moderate"], clean["large"])
    report(
        5,
        ok,
        f"EVP at tau={S.HIGH_TAU}: moderate {evp['moderate']:.4f} vs large {evp['large']:.4f}; "
        f"clean natural {clean['natural']:.3f}, moderate {clean['moderate']:.3f}, large {clean['large']:.3f}",
    )


@pytest.mark.slow
def test_criterion_6_threshold_crossover(lab, tmp_path):
    _, curves = lab
    paths = []
    for name, c in curves.items():
        p = tmp_path / f"{name}.csv"
        write_curve(c, p)
        paths.append(str(p))
    out = tmp_path / "compare.csv"
    code = main(["compare", "--curves", *paths, "--tau-min", "0.05", "--tau-max", "0.99",
                 "--tau-step", "0.01", "--out", str(out)])
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    best = {}
    for r in rows:
        best[float(r["tau"])] = r["best_model"]
    taus = sorted(best)
    viable = [t for t in taus if best[t] != "none"]
    switches = [(a, best[a], best[b]) for a, b in zip(taus, taus[1:]) if best[a] != best[b]]
    natural_switch = any("natural" in (x, y) and {x, y} - {"natural", "none"} for _, x, y in switches)
    ok = code == 0 and natural_switch and viable and best[viable[-1]] == "natural"
    runs = []
    for t in taus:
        if not runs or runs[-1][1] != best[t]:
            runs.append((t, best[t]))
    seq = " -> ".join(f"{m} from {t}" for t, m in runs)
    report(6, ok, f"best model by ascending tau: {seq}")


@pytest.mark.slow
def test_criterion_7_attack_correctness(lab):
    sc, curves = lab
    # budgets: every emitted example, both norms, cold and random starts
    total = inside = 0
    x, y = sc.test_set.inputs, sc.test_set.labels
    for model in sc.models.values():
        for norm in ("L2", "Linf"):
            adv = x
            for eps in uniform_grid(3.0, 0.25).epsilons[1:]:
                for cfg, init in (
                    (PgdConfig(norm, eps, 0.05, seed=5, random_start=True), None),
                    (PgdConfig(norm, eps, 0.05, iterations=20), adv),
                ):
                    out = pgd_attack_batch(model, x, y, cfg, init=init)
                    inside += int(np.count_nonzero(perturbation_norm(out - x, norm) <= eps))
                    total += len(y)
                adv = out

    # gradients: 200 central-difference probes
    rng = np.random.default_rng(7)
    h = 1e-4
    worst = 0.0
    shapes = [[2, 2], [2, 16, 2], [3, 8, 4], [2, 6, 5, 3]]
    for i in range(200):
        if i < 60:
            model = list(sc.models.values())[i % 3]
            xi = x[int(rng.integers(len(x)))] + rng.normal(scale=0.5, size=2)
        else:
            sizes = shapes[i % len(shapes)]
            model = MlpModel.init(sizes, i)
            xi = rng.normal(size=sizes[0])
        yi = int(rng.integers(model.layer_sizes[-1]))
        g = gradient(model, xi, yi)
        fd = np.array([
            (model.losses(xi + h * e, [yi])[0] - model.losses(xi - h * e, [yi])[0]) / (2 * h)
            for e in np.eye(len(xi))
        ])
        denom = max(np.linalg.norm(g) + np.linalg.norm(fd), 1e-12)
        worst = max(worst, np.linalg.norm(g - fd) / denom)

    # determinism: sweeps reproduce byte for byte
    identical = all(curve_to_csv(S.sweep(sc, n)) == curve_to_csv(c) for n, c in curves.items())

    ok = inside == total and worst < 1e-5 and identical
    report(7, ok, f"budgets {inside}/{total} inside, worst gradient rel err {worst:.2e}, "
                  f"sweeps byte-identical: {identical}")


@pytest.mark.slow
def test_criterion_8_min_perturbation_oracle():
    spec = GeneratorSpec(classes=2, per_class=200, seed=8, noise=0.4, centers=((-2.0, -0.5), (2.0, 0.5)))
    train_set, test_set = generate_dataset(spec, "Train"), generate_dataset(spec, "Test")
    probe = train(0, train_set, TrainConfig(epochs=30, learning_rate=0.5, seed=1), hidden=())
    w = probe.weights[0][1] - probe.weights[0][0]
    b = probe.biases[0][1] - probe.biases[0][0]
    score = np.abs(test_set.inputs @ w + b)
    step = 0.05
    fractions = {}
    for norm, dual in (("L2", np.linalg.norm(w)), ("Linf", np.abs(w).sum())):
        res = min_perturbation_distances(probe, test_set, norm, step, 4.0)
        margin = score / dual
        ok_pts = ~np.isnan(res.distances)
        gap = res.distances[ok_pts] - margin[ok_pts]
        fractions[norm] = float(np.mean((gap >= -1e-9) & (gap <= step)))
    ok = all(f >= 0.95 for f in fractions.values())
    report(8, ok, "points within one step of the margin: "
                  + ", ".join(f"{k} {v:.1%}" for k, v in fractions.items()))
