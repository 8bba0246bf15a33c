"""Deterministic synthetic datasets with controllable object-size laws."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from PIL import Image

from scalematch.dataset import IGNORE_REGION, PERSON, BoxRecord, DatasetAnnotations, ImageRecord
from scalematch.errors import InfeasiblePlacement

__all__ = [
    "Uniform",
    "LogNormal",
    "PointMass",
    "Mixture",
    "FixedAspect",
    "UniformAspect",
    "SynthSpec",
    "generate",
    "write_blank_images",
    "parse_law",
]


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class LogNormal:
    mu: float
    sigma: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.lognormal(self.mu, self.sigma))


@dataclass(frozen=True)
class PointMass:
    size: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.size)


@dataclass(frozen=True)
class Mixture:
    components: tuple
    weights: tuple[float, ...]

    def sample(self, rng: np.random.Generator) -> float:
        w = np.asarray(self.weights, dtype=float)
        i = int(rng.choice(len(self.components), p=w / w.sum()))
        return self.components[i].sample(rng)


@dataclass(frozen=True)
class FixedAspect:
    ratio: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.ratio)


@dataclass(frozen=True)
class UniformAspect:
    low: float
    high: float

    def sample(self, rng: np.random.Generator) -> float:
        return float(rng.uniform(self.low, self.high))


SizeLaw = Union[Uniform, LogNormal, PointMass, Mixture]
AspectLaw = Union[FixedAspect, UniformAspect]


@dataclass(frozen=True)
class SynthSpec:
    """Generator parameters.  Aspect ratio is width / height.

    The defaults give a TinyPerson-like right-skewed size law
    (median 18 px) on 1920x1080 frames.
    """

    n_images: int = 100
    boxes_per_image: tuple[int, int] = (1, 10)
    size_law: SizeLaw = field(default_factory=lambda: LogNormal(math.log(18.0), 0.8))
    aspect_law: AspectLaw = field(default_factory=lambda: FixedAspect(0.676))
    image_dims: tuple[int, int] = (1920, 1080)
    ignore_fraction: float = 0.0
    uncertain_fraction: float = 0.0
    seed: int = 0
    name: str = "synthetic"

    def __post_init__(self):
        lo, hi = self.boxes_per_image
        if self.n_images < 0 or lo < 0 or hi < lo:
            raise ValueError("n_images and boxes_per_image must be non-negative with low <= high")
        if min(self.image_dims) <= 0:
            raise ValueError("image dimensions must be positive")
        if not (0.0 <= self.ignore_fraction < 1.0) or not (0.0 <= self.uncertain_fraction < 1.0):
            raise ValueError("ignore_fraction and uncertain_fraction must lie in [0, 1)")
        if self.ignore_fraction + self.uncertain_fraction >= 1.0:
            raise ValueError("ignore_fraction + uncertain_fraction must be < 1")


def generate(spec: SynthSpec) -> DatasetAnnotations:
    """Draw a dataset; boxes are placed uniformly at random fully inside their image."""
    rng = np.random.default_rng(spec.seed)
    width, height = spec.image_dims
    images, boxes = [], []
    box_id = 1
    for i in range(1, spec.n_images + 1):
        images.append(ImageRecord(i, float(width), float(height), f"{i:06d}.png"))
        n_boxes = int(rng.integers(spec.boxes_per_image[0], spec.boxes_per_image[1] + 1))
        for _ in range(n_boxes):
            size = spec.size_law.sample(rng)
            ratio = spec.aspect_law.sample(rng)
            w, h = size * math.sqrt(ratio), size / math.sqrt(ratio)
            if w > width or h > height:
                raise InfeasiblePlacement(f"box {w:.1f}x{h:.1f} (size {size:.1f}) does not fit a {width}x{height} image")
            x = float(rng.uniform(0.0, width - w))
            y = float(rng.uniform(0.0, height - h))
            u = rng.random()
            category, uncertain = PERSON, False
            if u < spec.ignore_fraction:
                category = IGNORE_REGION
            elif u < spec.ignore_fraction + spec.uncertain_fraction:
                uncertain = True
            boxes.append(BoxRecord(box_id, i, x, y, w, h, category, uncertain))
            box_id += 1
    return DatasetAnnotations(tuple(images), tuple(boxes), name=spec.name)


def write_blank_images(
    ds: DatasetAnnotations, out_dir: str | os.PathLike, color: Sequence[int] = (127, 127, 127)
) -> None:
    """Write one flat-colour RGB PNG per image record."""
    out = Path(out_dir)
    for img in ds.images:
        size = (max(1, int(round(img.width))), max(1, int(round(img.height))))
        path = out / img.file_path
        path.parent.mkdir(parents=True, exist_ok=True)
        Image.new("RGB", size, tuple(int(c) for c in color)).save(path)


def parse_law(text: str):
    """Parse ``name:p1,p2`` strings such as ``lognormal:2.89,0.8`` or ``fixed:0.5``."""
    name, _, params = text.partition(":")
    values = [float(v) for v in params.split(",")] if params else []
    laws = {
        "uniform": Uniform,
        "lognormal": LogNormal,
        "point": PointMass,
        "fixed": FixedAspect,
        "uniform_aspect": UniformAspect,
    }
    if name not in laws:
        raise ValueError(f"unknown law {name!r}; expected one of {sorted(laws)}")
    return laws[name](*values)
