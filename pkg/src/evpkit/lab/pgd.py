"""Projected gradient descent under L2 and L-infinity budgets."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..curve import NormLabel
from ..errors import InvalidConfig
from .model import MlpModel

# final iterates are pushed out to this fraction of the budget
EDGE_FRACTION = 1.0 - 1e-6


@dataclass(frozen=True)
class PgdConfig:
    norm: NormLabel = NormLabel.L2
    epsilon: float = 0.0
    step: float = 0.005
    iterations: int | None = None
    seed: int = 0
    random_start: bool = False

    def __post_init__(self):
        object.__setattr__(self, "norm", NormLabel(self.norm))
        if not (self.step > 0 and math.isfinite(self.step)):
            raise InvalidConfig(f"PGD step must be positive, got {self.step!r}")
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise InvalidConfig(f"PGD budget must be non-negative, got {self.epsilon!r}")
        if self.epsilon > 0 and not self.step < self.epsilon:
            raise InvalidConfig(
                f"PGD step {self.step!r} must be smaller than the budget {self.epsilon!r}"
            )
        if self.iterations is not None and self.iterations < 1:
            raise InvalidConfig("iterations must be a positive integer")

    @property
    def n_iterations(self) -> int:
        if self.iterations is not None:
            return int(self.iterations)
        return max(1, math.ceil(2 * self.epsilon / self.step))

    def at_budget(self, epsilon: float) -> "PgdConfig":
        return replace(self, epsilon=float(epsilon))


def perturbation_norm(delta: np.ndarray, norm: NormLabel) -> np.ndarray:
    delta = np.atleast_2d(delta)
    if NormLabel(norm) is NormLabel.L2:
        return np.sqrt((delta**2).sum(axis=1))
    return np.abs(delta).max(axis=1)


def project(delta: np.ndarray, epsilon: float, norm: NormLabel) -> np.ndarray:
    """Nearest point of the norm ball (rows are independent perturbations)."""
    if NormLabel(norm) is NormLabel.LINF:
        return np.clip(delta, -epsilon, epsilon)
    n = perturbation_norm(delta, norm)
    scale = np.where(n > epsilon, epsilon / np.where(n > 0, n, 1.0), 1.0)
    return delta * scale[:, None]


def _random_start(rng, shape, epsilon, norm):
    if norm is NormLabel.LINF:
        return rng.uniform(-epsilon, epsilon, size=shape)
    d = rng.standard_normal(shape)
    d /= np.maximum(np.sqrt((d**2).sum(axis=1, keepdims=True)), 1e-300)
    r = epsilon * rng.uniform(size=(shape[0], 1)) ** (1.0 / shape[1])
    return d * r


def _ascent_direction(g: np.ndarray, norm: NormLabel) -> np.ndarray:
    if norm is NormLabel.LINF:
        return np.sign(g)
    n = np.sqrt((g**2).sum(axis=1, keepdims=True))
    return np.divide(g, n, out=np.zeros_like(g), where=n > 0)


def pgd_attack_batch(
    model: MlpModel,
    x: np.ndarray,
    y: np.ndarray,
    cfg: PgdConfig,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Untargeted PGD on a batch; returns one adversarial point per row.

    Fixed-size ascent steps (normalized gradient for L2, gradient sign for
    L-inf), projected onto the budget ball after every step.  ``init`` warm
    starts from given points (projected into the ball first); otherwise the
    attack starts at ``x`` or, with ``random_start``, uniformly inside the ball.

    Each row returns its highest-loss iterate.  A row that still ends
    correctly classified strictly inside the ball is pushed radially out to
    ``(1 - 1e-6) * epsilon``, as long as that does not lower its loss.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y))
    eps, norm = float(cfg.epsilon), cfg.norm
    if eps == 0.0 or len(y) == 0:
        return x.copy()
    if init is not None:
        delta = project(np.asarray(init, dtype=float) - x, eps, norm)
    elif cfg.random_start:
        delta = _random_start(np.random.default_rng(cfg.seed), x.shape, eps, norm)
        delta = project(delta, eps, norm)
    else:
        delta = np.zeros_like(x)

    best = delta.copy()
    best_loss = np.full(len(y), -np.inf)
    for _ in range(cfg.n_iterations):
        loss, g = model.loss_and_input_gradient(x + delta, y)
        better = loss > best_loss
        best[better] = delta[better]
        best_loss[better] = loss[better]
        delta = project(delta + cfg.step * _ascent_direction(g, norm), eps, norm)
    loss = model.losses(x + delta, y)
    better = loss > best_loss
    best[better] = delta[better]
    best_loss[better] = loss[better]

    # push still-correct interior points out towards the bound
    size = perturbation_norm(best, norm)
    target = eps * EDGE_FRACTION
    cand = (size > 0) & (size < target)
    if np.any(cand):
        cand &= model.predict(x + best) == y
    if np.any(cand):
        idx = np.flatnonzero(cand)
        pushed = best[idx] * (target / size[idx])[:, None]
        new_loss = model.losses(x[idx] + pushed, y[idx])
        flips = model.predict(x[idx] + pushed) != y[idx]
        keep = (new_loss >= best_loss[idx]) | flips
        best[idx[keep]] = pushed[keep]
    return _within_budget(x, best, eps, norm)


def _within_budget(x: np.ndarray, delta: np.ndarray, eps: float, norm: NormLabel) -> np.ndarray:
    """``x + delta`` with ``||result - x|| <= eps`` exactly in floating point.

    Rounding in the addition can overshoot the budget by an ulp; offending
    rows are shrunk by a relative 1e-12 until the emitted point complies.
    """
    adv = x + delta
    for _ in range(64):
        over = perturbation_norm(adv - x, norm) > eps
        if not over.any():
            return adv
        delta[over] *= 1 - 1e-12
        adv[over] = x[over] + delta[over]
    raise ArithmeticError("could not place the adversarial point inside its budget")


def pgd_attack(model: MlpModel, x: np.ndarray, label: int, cfg: PgdConfig) -> np.ndarray:
    """Adversarial version of a single input vector."""
    return pgd_attack_batch(model, np.asarray(x, dtype=float)[None, :], np.array([label]), cfg)[0]
