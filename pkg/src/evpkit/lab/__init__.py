"""Desk-scale attack lab: synthetic data, a small MLP, PGD and budget sweeps."""

from .data import Dataset, GeneratorSpec, Kind, Split, generate_dataset, load_spec
from .model import MlpModel, gradient
from .pgd import PgdConfig, perturbation_norm, pgd_attack, pgd_attack_batch, project
from .sweep import (
    MinPerturbationResult,
    budget_sweep,
    mean_min_perturbation,
    min_perturbation_distances,
)
from .train import TrainConfig, accuracy, train

__all__ = [
    "Dataset",
    "GeneratorSpec",
    "Kind",
    "Split",
    "generate_dataset",
    "load_spec",
    "MlpModel",
    "gradient",
    "PgdConfig",
    "perturbation_norm",
    "pgd_attack",
    "pgd_attack_batch",
    "project",
    "MinPerturbationResult",
    "budget_sweep",
    "mean_min_perturbation",
    "min_perturbation_distances",
    "TrainConfig",
    "accuracy",
    "train",
]
