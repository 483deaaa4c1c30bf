import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evpkit.curve import NormLabel, curve_to_csv
from evpkit.errors import DivergedLoss, InvalidConfig, InvalidSpec, StepSizeViolation, TooFewPoints
from evpkit.lab import (
    GeneratorSpec,
    MlpModel,
    PgdConfig,
    TrainConfig,
    accuracy,
    budget_sweep,
    generate_dataset,
    gradient,
    mean_min_perturbation,
    min_perturbation_distances,
    perturbation_norm,
    pgd_attack,
    pgd_attack_batch,
    train,
)
from evpkit.lab.pgd import EDGE_FRACTION
from evpkit.sampling import SamplingPlan, uniform_grid

BLOBS = GeneratorSpec(classes=2, per_class=100, seed=7, noise=0.3, centers=((-1, 0), (1, 0)))
FD_H = 1e-4


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)


def fd_input_grad(model, x, y):
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = FD_H
        g[i] = (model.losses(x + e, [y])[0] - model.losses(x - e, [y])[0]) / (2 * FD_H)
    return g


@pytest.fixture(scope="module")
def blob_model():
    return train(0, generate_dataset(BLOBS, "Train"), TrainConfig(epochs=30, learning_rate=0.2, seed=1))


@pytest.fixture(scope="module")
def blob_test():
    return generate_dataset(BLOBS, "Test")


class TestDataset:
    def test_deterministic(self):
        a, b = generate_dataset(BLOBS), generate_dataset(BLOBS)
        assert a.inputs.tobytes() == b.inputs.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()

    def test_splits_differ(self):
        assert not np.array_equal(generate_dataset(BLOBS, "Train").inputs, generate_dataset(BLOBS, "Test").inputs)

    def test_degenerate(self):
        with pytest.raises(InvalidSpec):
            generate_dataset(GeneratorSpec(classes=1))
        with pytest.raises(InvalidSpec):
            generate_dataset(GeneratorSpec(per_class=0))
        with pytest.raises(InvalidSpec):
            generate_dataset(GeneratorSpec(classes=3, centers=((0, 0), (1, 1))))

    def test_labels_in_range(self):
        d = generate_dataset(GeneratorSpec(classes=4, per_class=10, seed=3))
        assert d.labels.min() == 0 and d.labels.max() == 3 and d.classes == 4

    def test_rings(self):
        d = generate_dataset(GeneratorSpec(kind="ConcentricRings", classes=3, per_class=50, noise=0.0, radius=2.0))
        r = np.linalg.norm(d.inputs, axis=1)
        np.testing.assert_allclose(r, 2.0 * (d.labels + 1))

    def test_spec_json_round_trip(self):
        assert GeneratorSpec.from_dict(__import__("json").loads(BLOBS.to_json())) == BLOBS

    def test_zero_noise_separable(self):
        spec = GeneratorSpec(classes=2, per_class=20, seed=7, noise=0.0, centers=((-1, 0), (1, 0)))
        m = train(0, generate_dataset(spec, "Train"), TrainConfig(epochs=20, learning_rate=0.2, seed=1))
        assert accuracy(m, generate_dataset(spec, "Test")) == 1.0


class TestTrain:
    def test_zero_epochs_is_init(self):
        data = generate_dataset(BLOBS)
        m = train(5, data, TrainConfig(epochs=0))
        init = MlpModel.init([2, 32, 2], 5)
        assert m.to_json() == init.to_json()

    def test_reaches_accuracy(self, blob_model, blob_test):
        assert accuracy(blob_model, blob_test) >= 0.95

    def test_deterministic(self):
        data = generate_dataset(BLOBS)
        cfg = TrainConfig(epochs=3, seed=4, adversarial=PgdConfig("L2", 0.3, 0.05, random_start=True))
        assert train(2, data, cfg).to_json() == train(2, data, cfg).to_json()

    def test_requires_train_split(self, blob_test):
        with pytest.raises(InvalidConfig):
            train(0, blob_test, TrainConfig(epochs=1))

    def test_diverged(self):
        data = generate_dataset(GeneratorSpec(per_class=50, noise=1e150, centers=((-1, 0), (1, 0))))
        with pytest.raises(DivergedLoss):
            train(0, data, TrainConfig(epochs=2, learning_rate=1e10), hidden=())

    def test_adversarial_training_costs_clean_accuracy(self):
        spec = GeneratorSpec(per_class=300, seed=11, noise=(1.0, 0.1), centers=((-1.5, -0.3), (1.5, 0.3)))
        tr, te = generate_dataset(spec, "Train"), generate_dataset(spec, "Test")
        cfg = dict(epochs=20, learning_rate=0.1, seed=2)
        nat = train(1, tr, TrainConfig(**cfg), hidden=(16,))
        adv = train(1, tr, TrainConfig(**cfg, adversarial=PgdConfig("L2", 0.8, 0.16, 10)), hidden=(16,))
        assert accuracy(adv, te) < accuracy(nat, te)

    def test_bad_config(self):
        with pytest.raises(InvalidConfig):
            TrainConfig(epochs=-1)
        with pytest.raises(InvalidConfig):
            TrainConfig(learning_rate=0)


class TestGradient:
    def test_symmetric_model_points_along_axis(self):
        m = MlpModel([2, 2], [np.array([[-1.0, 0.0], [1.0, 0.0]])], [np.zeros(2)])
        g = gradient(m, np.zeros(2), 0)
        assert g[1] == 0.0 and g[0] > 0
        g1 = gradient(m, np.zeros(2), 1)
        np.testing.assert_allclose(g1, -g)

    def test_saturated_softmax(self):
        m = MlpModel([2, 2], [np.array([[-500.0, 0.0], [500.0, 0.0]])], [np.zeros(2)])
        g = gradient(m, np.array([1.0, 0.3]), 1)
        assert np.linalg.norm(g) < 1e-100

    @pytest.mark.parametrize("sizes", [[2, 2], [2, 8, 3], [3, 5, 4, 2]])
    def test_input_gradient_matches_finite_differences(self, sizes):
        rng = np.random.default_rng(sum(sizes))
        for trial in range(20):
            m = MlpModel.init(sizes, trial)
            x = rng.normal(size=sizes[0])
            y = int(rng.integers(sizes[-1]))
            assert rel_err(gradient(m, x, y), fd_input_grad(m, x, y)) < 1e-5

    def test_batch_matches_single(self):
        m = MlpModel.init([2, 6, 3], 0)
        x = np.random.default_rng(0).normal(size=(5, 2))
        y = np.array([0, 1, 2, 1, 0])
        batch = m.input_gradient(x, y)
        for i in range(5):
            np.testing.assert_allclose(batch[i], gradient(m, x[i], y[i]), rtol=1e-13, atol=1e-15)

    def test_parameter_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        m = MlpModel.init([2, 5, 3], 3)
        x = rng.normal(size=(7, 2))
        y = rng.integers(3, size=7)
        _, gw, gb = m.loss_and_param_gradients(x, y)
        for params, grads in ((m.weights, gw), (m.biases, gb)):
            for p, g in zip(params, grads):
                fd = np.zeros_like(p)
                for idx in np.ndindex(p.shape):
                    old = p[idx]
                    p[idx] = old + FD_H
                    up = m.losses(x, y).mean()
                    p[idx] = old - FD_H
                    down = m.losses(x, y).mean()
                    p[idx] = old
                    fd[idx] = (up - down) / (2 * FD_H)
                assert rel_err(g, fd) < 1e-5

    def test_checkpoint_round_trip(self, tmp_path):
        m = MlpModel.init([2, 4, 3], 9)
        m.save(tmp_path / "m.json")
        back = MlpModel.load(tmp_path / "m.json")
        for a, b in zip(m.parameters(), back.parameters()):
            np.testing.assert_array_equal(a, b)
        assert back.layer_sizes == [2, 4, 3]


class TestPgd:
    def test_zero_budget(self, blob_model):
        x = np.array([0.3, -0.2])
        np.testing.assert_array_equal(pgd_attack(blob_model, x, 1, PgdConfig("L2", 0.0, 0.01)), x)

    def test_config_rules(self):
        with pytest.raises(InvalidConfig):
            PgdConfig("L2", 0.01, 0.05)
        with pytest.raises(InvalidConfig):
            PgdConfig("L2", 0.5, 0.0)
        assert PgdConfig("L2", 0.5, 0.01).n_iterations == 100

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from(list(NormLabel)), st.floats(0.02, 2.0), st.booleans(), st.integers(0, 99))
    def test_budget_respected(self, blob_model, blob_test, norm, eps, rs, seed):
        cfg = PgdConfig(norm, eps, eps / 7, seed=seed, random_start=rs)
        x = blob_test.inputs[:40]
        adv = pgd_attack_batch(blob_model, x, blob_test.labels[:40], cfg)
        assert np.all(perturbation_norm(adv - x, norm) <= eps)

    @pytest.mark.parametrize("norm", list(NormLabel))
    def test_ascent(self, blob_model, blob_test, norm):
        x, y = blob_test.inputs, blob_test.labels
        adv = pgd_attack_batch(blob_model, x, y, PgdConfig(norm, 0.3, 0.03))
        assert np.all(blob_model.losses(adv, y) >= blob_model.losses(x, y))

    def test_reaches_edge_when_not_fooled(self, blob_model, blob_test):
        x, y = blob_test.inputs, blob_test.labels
        adv = pgd_attack_batch(blob_model, x, y, PgdConfig("L2", 0.2, 0.02))
        still = blob_model.predict(adv) == y
        size = perturbation_norm(adv - x, "L2")[still]
        assert np.all(size >= 0.2 * EDGE_FRACTION * (1 - 1e-9))

    def test_deterministic(self, blob_model, blob_test):
        cfg = PgdConfig("Linf", 0.4, 0.05, seed=3, random_start=True)
        a = pgd_attack_batch(blob_model, blob_test.inputs, blob_test.labels, cfg)
        b = pgd_attack_batch(blob_model, blob_test.inputs, blob_test.labels, cfg)
        assert a.tobytes() == b.tobytes()


class TestBudgetSweep:
    def test_single_point_plan(self, blob_model, blob_test):
        with pytest.raises(TooFewPoints):
            budget_sweep(blob_model, blob_test, SamplingPlan((0.0,), "Uniform", 0.0), PgdConfig("L2", 0, 0.01))

    def test_step_violation(self, blob_model, blob_test):
        with pytest.raises(StepSizeViolation):
            budget_sweep(blob_model, blob_test, uniform_grid(1.0, 0.004), PgdConfig("L2", 0, 0.005))

    def test_requires_test_split(self, blob_model):
        with pytest.raises(InvalidConfig):
            budget_sweep(blob_model, generate_dataset(BLOBS, "Train"), uniform_grid(1, 0.5), PgdConfig("L2", 0, 0.01))

    @pytest.mark.parametrize("norm", list(NormLabel))
    def test_curve_shape(self, blob_model, blob_test, norm):
        c = budget_sweep(blob_model, blob_test, uniform_grid(2.5, 0.25), PgdConfig(norm, 0, 0.02))
        assert c.clean_accuracy == accuracy(blob_model, blob_test)
        assert all(b <= a for a, b in zip(c.accuracies, c.accuracies[1:]))
        assert c.sample_counts == (len(blob_test),) * len(c)
        assert c.norm_label is NormLabel(norm)
        # budget 2 moves any point across the centre line between (+-1, 0)
        assert c.accuracies[c.epsilons.index(2.0)] <= 0.5 + 0.05
        assert all(m <= e * (1 + 1e-9) for m, e in zip(c.mean_actual_norms, c.epsilons))

    def test_byte_identical(self, blob_model, blob_test):
        plan = uniform_grid(1.0, 0.1)
        cfg = PgdConfig("L2", 0, 0.02, seed=5, random_start=True)
        a = curve_to_csv(budget_sweep(blob_model, blob_test, plan, cfg))
        b = curve_to_csv(budget_sweep(blob_model, blob_test, plan, cfg))
        assert a == b


@pytest.fixture(scope="module")
def probe():
    """Linear softmax probe (no hidden layer)."""
    return train(0, generate_dataset(BLOBS, "Train"), TrainConfig(epochs=30, learning_rate=0.5, seed=1), hidden=())


class TestMinPerturbation:
    def test_linear_margin_oracle(self, probe, blob_test):
        step = 0.05
        res = min_perturbation_distances(probe, blob_test, "L2", step, 3.0)
        w = probe.weights[0][1] - probe.weights[0][0]
        b = probe.biases[0][1] - probe.biases[0][0]
        margin = np.abs(blob_test.inputs @ w + b) / np.linalg.norm(w)
        ok = ~np.isnan(res.distances)
        gap = res.distances[ok] - margin[ok]
        assert np.mean((gap >= -1e-9) & (gap <= step)) >= 0.95

    def test_misclassified_points_excluded(self, probe, blob_test):
        res = min_perturbation_distances(probe, blob_test, "L2", 0.1, 2.0)
        wrong = probe.predict(blob_test.inputs) != blob_test.labels
        assert np.array_equal(np.isnan(res.distances), wrong)

    def test_all_censored(self, probe, blob_test):
        r = mean_min_perturbation(probe, blob_test, "L2", 0.001, 0.002)
        flips = r.params["n_evaluated"] - r.params["censored"]
        # the handful of points that sit within 0.002 of the boundary may flip
        assert flips <= 2
        far = GeneratorSpec(classes=2, per_class=20, seed=1, noise=0.0, centers=((-1, 0), (1, 0)))
        r = mean_min_perturbation(probe, generate_dataset(far, "Test"), "L2", 0.01, 0.02)
        assert r.value == 0.02 and r.params["censored"] == r.params["n_evaluated"] == 40

    def test_report(self, probe, blob_test):
        r = mean_min_perturbation(probe, blob_test, "Linf", 0.1, 2.0)
        assert r.metric.value == "MeanMinPerturbation"
        assert 0 < r.value <= 2.0
