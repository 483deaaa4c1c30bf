"""Small fully-connected softmax classifier with hand-written backprop."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .._io import atomic_write_text
from ..errors import InvalidSpec


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


@dataclass(eq=False)
class MlpModel:
    """Feed-forward classifier ``x -> tanh(W1 x + b1) -> ... -> W_L h + b_L``.

    Hidden layers use tanh; the output layer is linear and feeds a softmax
    cross-entropy loss.  ``layer_sizes == [d, C]`` gives a linear softmax
    probe.  Weight matrices are stored as ``(fan_out, fan_in)``.
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2 or min(self.layer_sizes) < 1:
            raise InvalidSpec(f"bad layer sizes {self.layer_sizes!r}")
        if self.layer_sizes[-1] < 2:
            raise InvalidSpec("a classifier needs at least two outputs")
        self.weights = [np.array(w, dtype=float) for w in self.weights]
        self.biases = [np.array(b, dtype=float) for b in self.biases]
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_sizes[k + 1], self.layer_sizes[k])
            if w.shape != shape or b.shape != (shape[0],):
                raise InvalidSpec(f"layer {k} parameters do not match sizes {shape}")
        if len(self.weights) != len(self.layer_sizes) - 1:
            raise InvalidSpec("one weight matrix per layer transition")

    @classmethod
    def init(cls, layer_sizes: Sequence[int], seed: int) -> "MlpModel":
        rng = np.random.default_rng(seed)
        ws, bs = [], []
        for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
            ws.append(rng.standard_normal((fan_out, fan_in)) / np.sqrt(fan_in))
            bs.append(np.zeros(fan_out))
        return cls(list(layer_sizes), ws, bs)

    @property
    def classes(self) -> int:
        return self.layer_sizes[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_sizes), [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    # -- forward / backward ------------------------------------------------

    def _forward(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        acts = [x]
        h = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w.T + b
            h = z if k == last else np.tanh(z)
            acts.append(h)
        return acts, h

    def logits(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self._forward(x)[1]

    def predict(self, x: np.ndarray) -> np.ndarray:
        return np.argmax(self.logits(x), axis=1)

    def losses(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Per-sample cross-entropy."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_1d(np.asarray(y))
        logp = _log_softmax(self.logits(x))
        return -logp[np.arange(len(y)), y]

    def _backward(self, x, y):
        acts, z = self._forward(x)
        logp = _log_softmax(z)
        n = len(y)
        delta = np.exp(logp)
        delta[np.arange(n), y] -= 1.0  # d loss_i / d logits_i
        grads_w, grads_b = [], []
        for k in range(len(self.weights) - 1, -1, -1):
            grads_w.append(delta.T @ acts[k])
            grads_b.append(delta.sum(axis=0))
            delta = delta @ self.weights[k]
            if k > 0:
                delta = delta * (1.0 - acts[k] ** 2)
        return -logp[np.arange(n), y], delta, grads_w[::-1], grads_b[::-1]

    def input_gradient(self, x: np.ndarray, y) -> np.ndarray:
        """Gradient of each sample's loss with respect to its own input.

        Accepts a single vector (returns a vector) or a batch (returns a batch).
        """
        single = np.ndim(x) == 1
        x2 = np.atleast_2d(np.asarray(x, dtype=float))
        y2 = np.atleast_1d(np.asarray(y))
        g = self._backward(x2, y2)[1]
        return g[0] if single else g

    def loss_and_input_gradient(self, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        loss, gx, _, _ = self._backward(x, y)
        return loss, gx

    def loss_and_param_gradients(self, x: np.ndarray, y: np.ndarray):
        """Mean loss over the batch and its gradient for every weight and bias."""
        loss, _, gw, gb = self._backward(np.atleast_2d(x), np.atleast_1d(y))
        n = len(loss)
        return loss.mean(), [g / n for g in gw], [g / n for g in gb]

    # -- checkpoints -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "layer_sizes": self.layer_sizes,
            "activation": "tanh",
            "layers": [
                {"weight": w.ravel(order="C").tolist(), "bias": b.tolist()}
                for w, b in zip(self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "MlpModel":
        sizes = [int(s) for s in doc["layer_sizes"]]
        if doc.get("activation", "tanh") != "tanh":
            raise InvalidSpec(f"unsupported activation {doc['activation']!r}")
        ws, bs = [], []
        for k, layer in enumerate(doc["layers"]):
            w = np.asarray(layer["weight"], dtype=float)
            if w.size != sizes[k + 1] * sizes[k]:
                raise InvalidSpec(f"layer {k} weight has {w.size} entries")
            ws.append(w.reshape(sizes[k + 1], sizes[k]))
            bs.append(np.asarray(layer["bias"], dtype=float))
        return cls(sizes, ws, bs)

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MlpModel":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_json())

    @classmethod
    def load(cls, path: str | Path) -> "MlpModel":
        return cls.from_json(Path(path).read_text())


def gradient(model: MlpModel, x: np.ndarray, label: int) -> np.ndarray:
    """d(cross-entropy)/d(input) for one input vector."""
    return model.input_gradient(np.asarray(x, dtype=float), label)
