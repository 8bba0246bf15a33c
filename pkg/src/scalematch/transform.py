"""Scale Match and Monotone Scale Match.

Both transforms rescale whole images: every image of the source dataset gets
one ratio ``c`` and the image plus all its boxes are multiplied by it, so the
mean person size of the image becomes the chosen target size.

* Scale Match draws the target size from the target histogram (pick a bin by
  its probability, then a uniform size inside the bin).
* Monotone Scale Match maps the image's mean size through
  ``f(s) = F_target^-1(F_source(s))``, which preserves size order.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from PIL import Image

from scalematch.dataset import BoxRecord, DatasetAnnotations, ImageRecord
from scalematch.errors import EmptyInput, EmptySource, MissingImageFile, PlanCoverageError
from scalematch.sizes import (
    EmpiricalCdf,
    RectifiedHistogram,
    absolute_size,
    empirical_cdf,
    histogram_cdf,
    object_sizes,
)

__all__ = [
    "DEFAULT_CLAMP",
    "PLAN_SCHEMA",
    "PlanEntry",
    "ScalePlan",
    "MonotoneMap",
    "sample_target_size",
    "build_scale_plan",
    "build_monotone_map",
    "build_monotone_plan",
    "apply_scale_plan",
    "round_half_up",
]

log = logging.getLogger(__name__)

DEFAULT_CLAMP = (1.0 / 32.0, 32.0)
PLAN_SCHEMA = "scalematch.scaleplan/1"

_RESAMPLE = {"bilinear": Image.Resampling.BILINEAR, "nearest": Image.Resampling.NEAREST}


@dataclass(frozen=True)
class PlanEntry:
    image_id: Any
    mean_size: float
    target_size: float
    ratio: float
    clamped: bool = False
    has_objects: bool = True


@dataclass(frozen=True)
class ScalePlan:
    entries: tuple[PlanEntry, ...]
    mode: str
    seed: int | None = None
    clamp: tuple[float, float] = DEFAULT_CLAMP

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.mode not in ("scale_match", "monotone"):
            raise ValueError(f"unknown plan mode {self.mode!r}")

    def by_image(self) -> dict[Any, PlanEntry]:
        return {e.image_id: e for e in self.entries}

    @property
    def n_clamped(self) -> int:
        return sum(e.clamped for e in self.entries)

    @property
    def n_passthrough(self) -> int:
        return sum(not e.has_objects for e in self.entries)

    def to_dict(self) -> dict:
        return {
            "schema": PLAN_SCHEMA,
            "mode": self.mode,
            "seed": self.seed,
            "clamp": list(self.clamp),
            "summary": {
                "n_images": len(self.entries),
                "n_clamped": self.n_clamped,
                "n_passthrough": self.n_passthrough,
            },
            "entries": [
                {
                    "image_id": e.image_id,
                    "mean_size": e.mean_size,
                    "target_size": e.target_size,
                    "ratio": e.ratio,
                    "clamped": e.clamped,
                    "has_objects": e.has_objects,
                }
                for e in self.entries
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "ScalePlan":
        entries = tuple(
            PlanEntry(
                image_id=e["image_id"],
                mean_size=float(e["mean_size"]),
                target_size=float(e["target_size"]),
                ratio=float(e["ratio"]),
                clamped=bool(e.get("clamped", False)),
                has_objects=bool(e.get("has_objects", True)),
            )
            for e in raw["entries"]
        )
        return cls(entries, raw["mode"], raw.get("seed"), tuple(raw.get("clamp", DEFAULT_CLAMP)))


def sample_target_size(h: RectifiedHistogram, rng: np.random.Generator, size: int | None = None):
    """Draw target sizes: a bin index by probability, then uniform inside the bin.

    Each draw consumes two uniforms from ``rng`` in order, so one call with
    ``size=n`` yields the same values as ``n`` scalar calls.
    """
    cum = np.cumsum(h.probs)
    cum[-1] = 1.0
    u = rng.random(2 if size is None else (size, 2))
    k = np.minimum(np.searchsorted(cum, u[..., 0], side="right"), h.k - 1)
    lo, hi = h.lows[k], h.highs[k]
    s = lo + (hi - lo) * u[..., 1]
    return float(s) if size is None else s


def _image_mean_sizes(ds: DatasetAnnotations, include_uncertain: bool) -> list[tuple[Any, float | None]]:
    out = []
    for img in ds.images:
        sizes = [absolute_size(b) for b in ds.boxes_by_image[img.image_id] if b.is_target(include_uncertain)]
        out.append((img.image_id, float(np.mean(sizes)) if sizes else None))
    return out


def _entry(image_id, s: float | None, s_hat: float, clamp: tuple[float, float]) -> PlanEntry:
    if s is None:
        return PlanEntry(image_id, 0.0, 0.0, 1.0, clamped=False, has_objects=False)
    raw = s_hat / s
    c = min(max(raw, clamp[0]), clamp[1])
    return PlanEntry(image_id, s, s_hat, c, clamped=c != raw)


def _check_source(means: list) -> None:
    if not any(s is not None for _, s in means):
        raise EmptySource("source dataset has no person boxes to rescale")


def build_scale_plan(
    source: DatasetAnnotations,
    target_hist: RectifiedHistogram,
    seed: int = 0,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
    include_uncertain: bool = False,
) -> ScalePlan:
    """One sampled target size per image; images without persons pass through with ``c = 1``."""
    means = _image_mean_sizes(source, include_uncertain)
    _check_source(means)
    rng = np.random.default_rng(seed)
    entries = []
    for image_id, s in means:
        s_hat = sample_target_size(target_hist, rng) if s is not None else 0.0
        entries.append(_entry(image_id, s, s_hat, clamp))
    plan = ScalePlan(tuple(entries), "scale_match", seed, tuple(clamp))
    if plan.n_clamped:
        log.warning("scale plan: %d of %d ratios clamped to %s", plan.n_clamped, len(entries), clamp)
    return plan


@dataclass(frozen=True, eq=False)
class MonotoneMap:
    """``f(s) = target_cdf^-1(source_cdf(s))``, monotone non-decreasing."""

    source_cdf: EmpiricalCdf
    target_cdf: EmpiricalCdf

    def __call__(self, s):
        return self.target_cdf.inverse(self.source_cdf(s))

    @property
    def domain(self) -> tuple[float, float]:
        return self.source_cdf.bounds


def build_monotone_map(source_sizes: DatasetAnnotations | Sequence[float], target_hist: RectifiedHistogram) -> MonotoneMap:
    if isinstance(source_sizes, DatasetAnnotations):
        source_sizes = object_sizes(source_sizes)
    sizes = np.asarray(source_sizes, dtype=float)
    if sizes.size == 0:
        raise EmptyInput("monotone map needs at least one source size")
    return MonotoneMap(empirical_cdf(sizes), histogram_cdf(target_hist))


def build_monotone_plan(
    source: DatasetAnnotations,
    mapping: MonotoneMap,
    clamp: tuple[float, float] = DEFAULT_CLAMP,
    include_uncertain: bool = False,
) -> ScalePlan:
    """Deterministic plan: each image's mean person size is sent through ``mapping``."""
    means = _image_mean_sizes(source, include_uncertain)
    _check_source(means)
    entries = [_entry(iid, s, float(mapping(s)) if s is not None else 0.0, clamp) for iid, s in means]
    plan = ScalePlan(tuple(entries), "monotone", None, tuple(clamp))
    if plan.n_clamped:
        log.warning("monotone plan: %d of %d ratios clamped to %s", plan.n_clamped, len(entries), clamp)
    return plan


# ---------------------------------------------------------------------------
# application


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def _scale_box(b: BoxRecord, c: float, width: float | None = None, height: float | None = None) -> BoxRecord:
    x, y, w, h = b.x * c, b.y * c, b.w * c, b.h * c
    if width is not None:
        # rounded pixel dimensions may cut up to half a pixel off the border
        x1, y1 = min(x + w, width), min(y + h, height)
        if x1 > x and y1 > y:
            w, h = x1 - x, y1 - y
    return replace(b, x=x, y=y, w=w, h=h)


def _resize_file(src: Path, dst: Path, size: tuple[int, int], resample) -> None:
    if not src.is_file():
        raise MissingImageFile(f"image file not found: {src}")
    with Image.open(src) as im:
        out = im.resize(size, resample=resample) if im.size != size else im.copy()
    dst.parent.mkdir(parents=True, exist_ok=True)
    out.save(dst)


def apply_scale_plan(
    source: DatasetAnnotations,
    plan: ScalePlan,
    image_dir_in: str | os.PathLike | None = None,
    image_dir_out: str | os.PathLike | None = None,
    annotations_only: bool | None = None,
    interpolation: str = "bilinear",
    workers: int | None = None,
) -> DatasetAnnotations:
    """Rescale every image and its boxes by the plan's ratio.

    With ``annotations_only`` (the default when no image directories are
    given) no pixels are touched and image dimensions stay exact
    (``W * c``), so relative sizes are preserved exactly.  Otherwise images
    are resized to ``(round(W * c), round(H * c))`` (at least 1 pixel) and
    written under ``image_dir_out`` with the same relative path.
    """
    if annotations_only is None:
        annotations_only = image_dir_in is None
    if not annotations_only and (image_dir_in is None or image_dir_out is None):
        raise ValueError("pixel mode needs both image_dir_in and image_dir_out")
    if interpolation not in _RESAMPLE:
        raise ValueError(f"interpolation must be one of {sorted(_RESAMPLE)}")

    ratios = plan.by_image()
    missing = [im.image_id for im in source.images if im.image_id not in ratios]
    if missing:
        raise PlanCoverageError(f"plan has no entry for {len(missing)} image(s), e.g. {missing[0]!r}")

    images: list[ImageRecord] = []
    boxes: list[BoxRecord] = []
    jobs = []
    for img in source.images:
        c = ratios[img.image_id].ratio
        if annotations_only:
            new_img = replace(img, width=img.width * c, height=img.height * c)
            boxes.extend(_scale_box(b, c) for b in source.boxes_by_image[img.image_id])
        else:
            size = (max(1, round_half_up(img.width * c)), max(1, round_half_up(img.height * c)))
            new_img = replace(img, width=float(size[0]), height=float(size[1]))
            boxes.extend(_scale_box(b, c, *size) for b in source.boxes_by_image[img.image_id])
            jobs.append((Path(image_dir_in) / img.file_path, Path(image_dir_out) / img.file_path, size))
        images.append(new_img)

    if jobs:
        resample = _RESAMPLE[interpolation]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(_resize_file, src, dst, size, resample) for src, dst, size in jobs]:
                fut.result()

    return DatasetAnnotations(tuple(images), tuple(boxes), name=source.name)
