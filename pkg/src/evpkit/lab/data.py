"""Seeded synthetic classification datasets."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from ..errors import InvalidSpec


class Kind(str, Enum):
    GAUSSIAN_BLOBS = "GaussianBlobs"
    CONCENTRIC_RINGS = "ConcentricRings"


class Split(str, Enum):
    TRAIN = "Train"
    TEST = "Test"


_SPLIT_STREAM = {Split.TRAIN: 0, Split.TEST: 1}


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a dataset.

    GaussianBlobs: class ``k`` is drawn from ``N(centers[k], diag(noise**2))``.
    ``noise`` is a scalar or one standard deviation per input dimension.
    Without explicit ``centers`` the classes sit evenly on a circle of
    ``radius`` (two classes at ``(+-radius, 0)``).

    ConcentricRings: class ``k`` lies on a circle of radius
    ``radius * (k + 1)`` at a uniform angle, with Gaussian radial noise.
    """

    kind: Kind = Kind.GAUSSIAN_BLOBS
    classes: int = 2
    per_class: int = 200
    seed: int = 0
    noise: float | tuple[float, ...] = 0.3
    radius: float = 1.0
    centers: tuple[tuple[float, ...], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if isinstance(self.noise, (list, tuple)):
            object.__setattr__(self, "noise", tuple(float(v) for v in self.noise))
        if self.centers is not None:
            object.__setattr__(
                self, "centers", tuple(tuple(float(v) for v in c) for c in self.centers)
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)
    classes: int
    split: Split
    spec: GeneratorSpec

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _blob_centers(spec: GeneratorSpec) -> np.ndarray:
    if spec.centers is not None:
        centers = np.asarray(spec.centers, dtype=float)
        if centers.ndim != 2 or centers.shape[0] != spec.classes:
            raise InvalidSpec("need exactly one center per class")
        return centers
    angles = 2 * np.pi * np.arange(spec.classes) / spec.classes
    return spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _check(spec: GeneratorSpec) -> None:
    if int(spec.classes) != spec.classes or spec.classes < 2:
        raise InvalidSpec(f"need at least 2 classes, got {spec.classes!r}")
    if int(spec.per_class) != spec.per_class or spec.per_class < 1:
        raise InvalidSpec(f"need at least 1 point per class, got {spec.per_class!r}")
    if np.any(np.asarray(spec.noise) < 0):
        raise InvalidSpec("noise scale must be non-negative")
    if spec.radius <= 0:
        raise InvalidSpec("radius must be positive")


def generate_dataset(spec: GeneratorSpec, split: Split | str = Split.TRAIN) -> Dataset:
    """Draw a dataset; the same ``(spec, split)`` always gives identical arrays.

    Train and test splits use independent streams of the same seed.
    """
    _check(spec)
    split = Split(split)
    rng = np.random.default_rng([int(spec.seed), _SPLIT_STREAM[split]])
    n, c = int(spec.per_class), int(spec.classes)
    labels = np.repeat(np.arange(c), n)
    if spec.kind is Kind.GAUSSIAN_BLOBS:
        centers = _blob_centers(spec)
        noise = np.broadcast_to(np.asarray(spec.noise, dtype=float), (centers.shape[1],))
        inputs = centers[labels] + rng.standard_normal((n * c, centers.shape[1])) * noise
    else:
        if np.ndim(spec.noise) != 0:
            raise InvalidSpec("ConcentricRings takes a scalar noise")
        theta = rng.uniform(0.0, 2 * np.pi, n * c)
        r = spec.radius * (labels + 1) + rng.standard_normal(n * c) * float(spec.noise)
        inputs = np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return Dataset(inputs, labels, c, split, spec)


def load_spec(path: str | Path) -> tuple[GeneratorSpec, Split | None]:
    """Read a generator spec JSON; an optional ``"split"`` key is returned too."""
    doc = json.loads(Path(path).read_text())
    split = doc.get("split")
    return GeneratorSpec.from_dict(doc), (Split(split) if split else None)
