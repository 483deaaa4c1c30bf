"""The pinned desk-scale tradeoff scenario.

Two Gaussian classes share a robust direction (large separation, large
spread) and a brittle one (small separation, tight spread).  A naturally
trained model leans on the brittle direction: near-perfect clean accuracy
that collapses under small budgets.  Adversarial training shifts weight to
the robust direction, trading clean accuracy for graceful degradation, and
the larger the training budget the further the trade goes.

All lengths are in units where the brittle offset is 0.9 and the robust
offset 4.5.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..curve import NormLabel, PerturbationCurve
from ..sampling import uniform_grid
from .data import Dataset, GeneratorSpec, generate_dataset
from .model import MlpModel
from .pgd import PgdConfig
from .sweep import budget_sweep
from .train import TrainConfig, train

DATA_SPEC = GeneratorSpec(
    kind="GaussianBlobs",
    classes=2,
    per_class=500,
    seed=11,
    noise=(3.0, 0.3),
    centers=((-4.5, -0.9), (4.5, 0.9)),
)
HIDDEN = (16,)
MODEL_SEED = 1
TRAIN_SEED = 2
EPOCHS = 40
BATCH_SIZE = 32
LEARNING_RATE = 0.05

# name -> adversarial training budget (None = natural training)
TRAINING_BUDGETS: dict[str, float | None] = {
    "natural": None,
    "small": 0.6,
    "moderate": 1.2,
    "large": 2.4,
}

MAX_EPSILON = 6.0
SWEEP_DELTA = 0.1
SWEEP_STEP = 0.01
HIGH_TAU = 0.9

CONVERGENCE_MODEL = "moderate"
CONVERGENCE_TAU = 0.7
CONVERGENCE_DELTAS = (0.4, 0.2, 0.1, 0.05, 0.025)
CONVERGENCE_STEP = 0.005


@dataclass
class Scenario:
    train_set: Dataset
    test_set: Dataset
    models: dict[str, MlpModel]


def train_config(name: str) -> TrainConfig:
    eps = TRAINING_BUDGETS[name]
    adv = None if eps is None else PgdConfig(NormLabel.L2, eps, step=eps / 5, iterations=10)
    return TrainConfig(EPOCHS, BATCH_SIZE, LEARNING_RATE, TRAIN_SEED, adv)


def build(names=None) -> Scenario:
    """Generate both splits and train the requested models (default: all)."""
    names = list(TRAINING_BUDGETS) if names is None else list(names)
    train_set = generate_dataset(DATA_SPEC, "Train")
    test_set = generate_dataset(DATA_SPEC, "Test")
    models = {n: train(MODEL_SEED, train_set, train_config(n), hidden=HIDDEN) for n in names}
    return Scenario(train_set, test_set, models)


def sweep(scenario: Scenario, name: str, delta: float = SWEEP_DELTA, step: float = SWEEP_STEP) -> PerturbationCurve:
    plan = uniform_grid(MAX_EPSILON, delta)
    return budget_sweep(scenario.models[name], scenario.test_set, plan, PgdConfig(NormLabel.L2, 0.0, step), source=name)
