"""Synthetic desk-scale image classification task.

Each class gets a fixed template built from a class-specific 2-d sinusoid
plus a Gaussian bump at a class-specific position; samples are
``separation * template + noise_level * N(0, 1)``.  Templates are
deterministic functions of the class index, so the task is identical for a
given spec and seed down to the byte.  Train and validation samples are
drawn from one pool (validation is carved off the end), the test split is
drawn separately.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import stream


@dataclass(frozen=True)
class DatasetSpec:
    classes: int = 8
    train: int = 4000
    val: int = 500
    test: int = 500
    height: int = 16
    width: int = 16
    channels: int = 1
    separation: float = 5.0
    noise_level: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError("need at least two classes")
        for name in ("train", "val", "test", "height", "width", "channels"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.noise_level < 0 or self.separation < 0:
            raise ValueError("separation and noise_level must be >= 0")

    @property
    def input_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


@dataclass
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    spec: DatasetSpec | None = None


def class_templates(spec: DatasetSpec) -> np.ndarray:
    """Unit-norm per-class templates, deterministic in the class index."""
    k = spec.classes
    c, h, w = spec.input_shape
    ii, jj = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    templates = np.zeros((k, c, h, w))
    for cls in range(k):
        fx = 1 + cls % 3
        fy = 1 + (cls // 3) % 3
        phase = (cls % 4) * np.pi / 4
        wave = np.sin(2 * np.pi * (fx * ii + fy * jj) / h + phase)
        angle = 2 * np.pi * cls / k
        r0 = h / 2 + (h / 4) * np.sin(angle)
        c0 = w / 2 + (w / 4) * np.cos(angle)
        bump = np.exp(-((ii - r0) ** 2 + (jj - c0) ** 2) / (2 * (h / 8) ** 2))
        tpl = wave + 2.0 * bump
        templates[cls] = tpl / np.linalg.norm(tpl)
    return templates


def _draw_split(spec: DatasetSpec, templates: np.ndarray, n: int, split: str):
    rng = stream(spec.seed, "data", split)
    labels = np.arange(n) % spec.classes
    rng.shuffle(labels)
    noise = rng.standard_normal((n, *spec.input_shape))
    x = spec.separation * templates[labels] + spec.noise_level * noise
    return x, labels.astype(np.int64)


def generate_synthetic(spec: DatasetSpec) -> Dataset:
    """Build disjoint train/val/test splits (val is carved from the train pool)."""
    templates = class_templates(spec)
    pool_x, pool_y = _draw_split(spec, templates, spec.train + spec.val, "trainval")
    test_x, test_y = _draw_split(spec, templates, spec.test, "test")
    return Dataset(
        train_x=pool_x[: spec.train],
        train_y=pool_y[: spec.train],
        val_x=pool_x[spec.train :],
        val_y=pool_y[spec.train :],
        test_x=test_x,
        test_y=test_y,
        spec=spec,
    )
