"""Minibatch SGD, optionally on PGD-perturbed batches."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..errors import DivergedLoss, InvalidConfig
from .data import Dataset, Split
from .model import MlpModel
from .pgd import PgdConfig, pgd_attack_batch


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 0.1
    seed: int = 0
    adversarial: PgdConfig | None = None

    def __post_init__(self):
        if self.epochs < 0 or int(self.epochs) != self.epochs:
            raise InvalidConfig("epochs must be a non-negative integer")
        if self.batch_size < 1:
            raise InvalidConfig("batch size must be positive")
        if not self.learning_rate > 0:
            raise InvalidConfig("learning rate must be positive")
        if self.adversarial is not None and self.adversarial.epsilon <= 0:
            raise InvalidConfig("adversarial training needs a positive budget")


def train(
    model_init_seed: int,
    dataset: Dataset,
    cfg: TrainConfig,
    hidden: tuple[int, ...] | list[int] = (32,),
    init: MlpModel | None = None,
) -> MlpModel:
    """Fit a classifier by plain minibatch SGD on mean cross-entropy.

    The model starts from ``MlpModel.init([d, *hidden, C], model_init_seed)``
    unless ``init`` is given.  With ``cfg.adversarial`` every batch is
    replaced by its PGD examples before the gradient step.  Shuffling and
    random starts are drawn from ``cfg.seed``.
    """
    if dataset.split is not Split.TRAIN:
        raise InvalidConfig("training requires the Train split")
    if init is None:
        model = MlpModel.init([dataset.dim, *hidden, dataset.classes], model_init_seed)
    else:
        model = init.copy()
    if cfg.epochs == 0:
        return model

    rng = np.random.default_rng(cfg.seed)
    x_all, y_all = dataset.inputs, dataset.labels
    n = len(y_all)
    batch_no = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = x_all[idx], y_all[idx]
            if cfg.adversarial is not None:
                adv_cfg = replace(cfg.adversarial, seed=cfg.adversarial.seed + batch_no)
                xb = pgd_attack_batch(model, xb, yb, adv_cfg)
            with np.errstate(over="ignore", invalid="ignore"):
                loss, gw, gb = model.loss_and_param_gradients(xb, yb)
            if not np.isfinite(loss):
                raise DivergedLoss(f"non-finite loss {loss!r} in epoch {epoch}")
            for k in range(len(model.weights)):
                model.weights[k] -= cfg.learning_rate * gw[k]
                model.biases[k] -= cfg.learning_rate * gb[k]
            batch_no += 1
    if not model.is_finite():
        raise DivergedLoss("training produced non-finite parameters")
    return model


def accuracy(model: MlpModel, dataset: Dataset) -> float:
    return float(np.mean(model.predict(dataset.inputs) == dataset.labels))
