"""In-memory data model for annotated datasets and detection results.

Annotation files are COCO-style JSON.  Each annotation may carry two extra
boolean attributes, ``ignore`` and ``uncertain``.  All person sub-classes
(e.g. "sea person" / "earth person") collapse into a single ``person``
category; anything flagged ``ignore`` (or whose category name mentions
"ignore") becomes an ``ignore_region``.

Detection files are a JSON list of ``{"image_id", "bbox": [x, y, w, h], "score"}``.
"""

from __future__ import annotations

import json
import logging
import os
from collections import defaultdict
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Any, Iterable, Union

from scalematch._io import id_sort_key, plain_number, write_json
from scalematch.errors import (
    DanglingReference,
    ParseError,
    SchemaError,
    ScoreRangeError,
)

__all__ = [
    "PERSON",
    "IGNORE_REGION",
    "ANNOTATION_SCHEMA",
    "DETECTION_SCHEMA",
    "BoxRecord",
    "ImageRecord",
    "DatasetAnnotations",
    "Detection",
    "DetectionSet",
    "load_annotations",
    "save_annotations",
    "annotations_to_dict",
    "annotations_from_dict",
    "load_detections",
    "save_detections",
    "detections_from_list",
    "detections_to_list",
]

log = logging.getLogger(__name__)

Identifier = Union[int, str]

PERSON = "person"
IGNORE_REGION = "ignore_region"
CATEGORIES = (PERSON, IGNORE_REGION)
_CATEGORY_IDS = {PERSON: 1, IGNORE_REGION: 2}

ANNOTATION_SCHEMA = "scalematch.annotations/1"
DETECTION_SCHEMA = "scalematch.detections/1"

DEFAULT_DETECTION_CAP = 200


@dataclass(frozen=True)
class BoxRecord:
    """One annotated object, ``(x, y)`` is the top-left corner in pixels."""

    id: Identifier
    image_id: Identifier
    x: float
    y: float
    w: float
    h: float
    category: str = PERSON
    uncertain: bool = False

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise SchemaError(f"box {self.id!r}: width and height must be positive, got {self.w}x{self.h}")
        if self.category not in CATEGORIES:
            raise SchemaError(f"box {self.id!r}: unknown category {self.category!r}")

    @property
    def xywh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def is_ignore_region(self) -> bool:
        return self.category == IGNORE_REGION

    def is_target(self, include_uncertain: bool = False) -> bool:
        """True for person boxes that count as real objects (not ignore, not uncertain)."""
        if self.category != PERSON:
            return False
        return include_uncertain or not self.uncertain


@dataclass(frozen=True)
class ImageRecord:
    """Image metadata.  Dimensions are pixels; they may be fractional only for
    annotation-only rescaled datasets, where no pixels exist."""

    image_id: Identifier
    width: float
    height: float
    file_path: str = ""
    source_video: str | None = None

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise SchemaError(f"image {self.image_id!r}: dimensions must be positive")

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class DatasetAnnotations:
    """Images plus boxes of one dataset, stored sorted by identifier."""

    images: tuple[ImageRecord, ...] = ()
    boxes: tuple[BoxRecord, ...] = ()
    name: str = ""

    def __post_init__(self):
        images = tuple(sorted(self.images, key=lambda im: id_sort_key(im.image_id)))
        boxes = tuple(sorted(self.boxes, key=lambda b: id_sort_key(b.id)))
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "boxes", boxes)

        seen: set = set()
        for im in images:
            if im.image_id in seen:
                raise SchemaError(f"duplicate image id {im.image_id!r}")
            seen.add(im.image_id)
        box_ids: set = set()
        for b in boxes:
            if b.id in box_ids:
                raise SchemaError(f"duplicate annotation id {b.id!r}")
            box_ids.add(b.id)
            if b.image_id not in seen:
                raise DanglingReference(f"annotation {b.id!r} references unknown image {b.image_id!r}")

    @cached_property
    def image_by_id(self) -> dict[Identifier, ImageRecord]:
        return {im.image_id: im for im in self.images}

    @cached_property
    def boxes_by_image(self) -> dict[Identifier, list[BoxRecord]]:
        out: dict[Identifier, list[BoxRecord]] = {im.image_id: [] for im in self.images}
        for b in self.boxes:
            out[b.image_id].append(b)
        return out

    def target_boxes(self, include_uncertain: bool = False) -> list[BoxRecord]:
        return [b for b in self.boxes if b.is_target(include_uncertain)]

    def with_name(self, name: str) -> "DatasetAnnotations":
        return replace(self, name=name)


@dataclass(frozen=True)
class Detection:
    image_id: Identifier
    x: float
    y: float
    w: float
    h: float
    score: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise SchemaError(f"detection on image {self.image_id!r} has non-positive size {self.w}x{self.h}")
        if not (0.0 <= self.score <= 1.0):
            raise ScoreRangeError(f"detection score {self.score!r} outside [0, 1]")

    @property
    def xywh(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class DetectionSet:
    detections: tuple[Detection, ...] = ()
    cap_per_image: int = DEFAULT_DETECTION_CAP

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(self.detections))
        if self.cap_per_image < 1:
            raise ValueError("cap_per_image must be positive")

    def __len__(self) -> int:
        return len(self.detections)

    def by_image(self) -> dict[Identifier, list[Detection]]:
        out: dict[Identifier, list[Detection]] = defaultdict(list)
        for d in self.detections:
            out[d.image_id].append(d)
        return dict(out)

    def capped(self) -> "DetectionSet":
        """Keep the top ``cap_per_image`` detections per image by score.

        Ties keep input order; the surviving detections keep their input order too.
        """
        keep: set[int] = set()
        groups: dict[Identifier, list[int]] = defaultdict(list)
        for i, d in enumerate(self.detections):
            groups[d.image_id].append(i)
        for idx in groups.values():
            # sorted() is stable, so equal scores stay in input order
            ranked = sorted(idx, key=lambda i: -self.detections[i].score)
            keep.update(ranked[: self.cap_per_image])
        kept = tuple(d for i, d in enumerate(self.detections) if i in keep)
        return DetectionSet(kept, self.cap_per_image)


# ---------------------------------------------------------------------------
# annotation JSON


def _require(obj: dict, key: str, what: str) -> Any:
    if not isinstance(obj, dict) or key not in obj:
        raise SchemaError(f"{what}: missing required field {key!r}")
    return obj[key]


def _category_names(raw: dict) -> dict[Any, str]:
    names = {}
    for cat in raw.get("categories", []) or []:
        if isinstance(cat, dict) and "id" in cat:
            names[cat["id"]] = str(cat.get("name", ""))
    return names


def _clip_box(x: float, y: float, w: float, h: float, width: float, height: float):
    x0, y0 = max(x, 0.0), max(y, 0.0)
    x1, y1 = min(x + w, width), min(y + h, height)
    return x0, y0, x1 - x0, y1 - y0


def annotations_from_dict(raw: Any, name: str = "") -> DatasetAnnotations:
    """Build a dataset from an already-parsed COCO-style dict."""
    if not isinstance(raw, dict):
        raise ParseError("annotation file must hold a JSON object")
    images = []
    for im in _require(raw, "images", "annotation file"):
        iid = _require(im, "id", "image")
        images.append(
            ImageRecord(
                image_id=iid,
                width=float(_require(im, "width", f"image {iid!r}")),
                height=float(_require(im, "height", f"image {iid!r}")),
                file_path=str(im.get("file_name", "")),
                source_video=im.get("source_video"),
            )
        )
    dims = {im.image_id: (im.width, im.height) for im in images}
    cat_names = _category_names(raw)

    boxes = []
    for ann in raw.get("annotations", []) or []:
        aid = _require(ann, "id", "annotation")
        what = f"annotation {aid!r}"
        image_id = _require(ann, "image_id", what)
        bbox = _require(ann, "bbox", what)
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise SchemaError(f"{what}: bbox must be [x, y, w, h]")
        x, y, w, h = (float(v) for v in bbox)
        if not (w > 0 and h > 0):
            raise SchemaError(f"{what}: bbox has non-positive width or height {bbox!r}")
        if image_id not in dims:
            raise DanglingReference(f"{what} references unknown image {image_id!r}")

        width, height = dims[image_id]
        if x < 0 or y < 0 or x + w > width or y + h > height:
            cx, cy, cw, ch = _clip_box(x, y, w, h, width, height)
            if not (cw > 0 and ch > 0):
                raise SchemaError(f"{what}: bbox lies entirely outside image {image_id!r}")
            log.warning("%s: bbox %r clipped to image %r bounds", what, bbox, image_id)
            x, y, w, h = cx, cy, cw, ch

        cat_name = cat_names.get(ann.get("category_id"), "").lower()
        is_ignore = bool(ann.get("ignore", False)) or "ignore" in cat_name
        boxes.append(
            BoxRecord(
                id=aid,
                image_id=image_id,
                x=x,
                y=y,
                w=w,
                h=h,
                category=IGNORE_REGION if is_ignore else PERSON,
                uncertain=bool(ann.get("uncertain", False)),
            )
        )
    return DatasetAnnotations(tuple(images), tuple(boxes), name=name or str(raw.get("info", {}).get("name", "")))


def load_annotations(path: str | os.PathLike, format: str = "coco_json") -> DatasetAnnotations:
    if format != "coco_json":
        raise ValueError(f"unsupported annotation format {format!r}")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    default_name = os.path.splitext(os.path.basename(os.fspath(path)))[0]
    ds = annotations_from_dict(raw)
    return ds if ds.name else ds.with_name(default_name)


def annotations_to_dict(ds: DatasetAnnotations) -> dict:
    images = []
    for im in ds.images:
        rec = {
            "id": im.image_id,
            "width": plain_number(im.width),
            "height": plain_number(im.height),
            "file_name": im.file_path,
        }
        if im.source_video is not None:
            rec["source_video"] = im.source_video
        images.append(rec)
    annotations = [
        {
            "id": b.id,
            "image_id": b.image_id,
            "bbox": [b.x, b.y, b.w, b.h],
            "area": b.w * b.h,
            "category_id": _CATEGORY_IDS[b.category],
            "ignore": b.is_ignore_region,
            "uncertain": b.uncertain,
        }
        for b in ds.boxes
    ]
    return {
        "info": {"name": ds.name, "schema": ANNOTATION_SCHEMA},
        "images": images,
        "annotations": annotations,
        "categories": [{"id": cid, "name": name} for name, cid in _CATEGORY_IDS.items()],
    }


def save_annotations(ds: DatasetAnnotations, path: str | os.PathLike) -> None:
    write_json(path, annotations_to_dict(ds))


# ---------------------------------------------------------------------------
# detection JSON


def detections_from_list(raw: Any, cap_per_image: int = DEFAULT_DETECTION_CAP) -> DetectionSet:
    if not isinstance(raw, list):
        raise ParseError("detection file must hold a JSON list")
    dets = []
    for i, item in enumerate(raw):
        what = f"detection #{i}"
        image_id = _require(item, "image_id", what)
        bbox = _require(item, "bbox", what)
        score = _require(item, "score", what)
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise SchemaError(f"{what}: bbox must be [x, y, w, h]")
        score = float(score)
        if not (0.0 <= score <= 1.0):
            raise ScoreRangeError(f"{what}: score {score!r} outside [0, 1]")
        dets.append(Detection(image_id, *(float(v) for v in bbox), score=score))
    return DetectionSet(tuple(dets), cap_per_image).capped()


def load_detections(path: str | os.PathLike, cap_per_image: int = DEFAULT_DETECTION_CAP) -> DetectionSet:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return detections_from_list(raw, cap_per_image)


def detections_to_list(dets: Iterable[Detection]) -> list[dict]:
    ordered = sorted(dets, key=lambda d: (id_sort_key(d.image_id), -d.score))
    return [{"image_id": d.image_id, "bbox": [d.x, d.y, d.w, d.h], "score": d.score} for d in ordered]


def save_detections(dets: DetectionSet, path: str | os.PathLike) -> None:
    write_json(path, detections_to_list(dets.detections))
