"""Cutting large images into overlapping tiles and merging tile detections back.

A person box goes to every tile holding at least half of its area (clipped
to the tile).  A smaller intersection becomes an ignore region of that tile,
so a truncated person never counts as background.  Ignore regions are
clipped into every tile they touch.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from PIL import Image

from scalematch.boxes import intersection, nms
from scalematch.dataset import (
    IGNORE_REGION,
    BoxRecord,
    DatasetAnnotations,
    Detection,
    DetectionSet,
    ImageRecord,
)
from scalematch.errors import InvalidOverlap, MissingImageFile, UnknownTile

__all__ = [
    "PROVENANCE_SCHEMA",
    "TileSpec",
    "TileOrigin",
    "TiledDataset",
    "axis_offsets",
    "plan_tiles",
    "cut_dataset",
    "fill_ignore_regions",
    "mean_pixel_value",
    "merge_detections",
    "provenance_to_dict",
    "provenance_from_dict",
]

PROVENANCE_SCHEMA = "scalematch.tiles/1"

DEFAULT_TILE = 1000
DEFAULT_OVERLAP = 100
MIN_AREA_FRACTION = 0.5


def axis_offsets(dim: float, tile: float, overlap: float) -> list[float]:
    """Tile origins along one axis: multiples of ``tile - overlap``, last one clamped to ``dim - tile``."""
    if not (0 <= overlap < tile):
        raise InvalidOverlap(f"overlap {overlap} must satisfy 0 <= overlap < tile ({tile})")
    stride = tile - overlap
    offsets: list[float] = []
    o = 0
    while True:
        if o + tile >= dim:
            last = max(0, min(o, dim - tile))
            if not offsets or offsets[-1] != last:
                offsets.append(last)
            return offsets
        offsets.append(o)
        o += stride


@dataclass(frozen=True)
class TileSpec:
    image_id: Any
    width: float
    height: float
    tile_w: float
    tile_h: float
    overlap: float
    offsets: tuple[tuple[float, float], ...]

    def rect(self, ox: float, oy: float) -> tuple[float, float, float, float]:
        return (ox, oy, min(self.tile_w, self.width - ox), min(self.tile_h, self.height - oy))


def plan_tiles(
    img: ImageRecord, tile_w: float = DEFAULT_TILE, tile_h: float = DEFAULT_TILE, overlap: float = DEFAULT_OVERLAP
) -> TileSpec:
    if not (0 <= overlap < min(tile_w, tile_h)):
        raise InvalidOverlap(f"overlap {overlap} must satisfy 0 <= overlap < min(tile_w, tile_h)")
    xs = axis_offsets(img.width, tile_w, overlap)
    ys = axis_offsets(img.height, tile_h, overlap)
    return TileSpec(img.image_id, img.width, img.height, tile_w, tile_h, overlap, tuple((x, y) for y in ys for x in xs))


@dataclass(frozen=True)
class TileOrigin:
    tile_id: Any
    parent_id: Any
    ox: float
    oy: float
    width: float
    height: float
    background: bool = False


@dataclass(frozen=True)
class TiledDataset:
    dataset: DatasetAnnotations
    provenance: dict[Any, TileOrigin]


def _clip_rebase(b: BoxRecord, rect, new_id, tile_id, category=None) -> BoxRecord | None:
    tx, ty, tw, th = rect
    x0, y0 = max(b.x, tx), max(b.y, ty)
    x1, y1 = min(b.x + b.w, tx + tw), min(b.y + b.h, ty + th)
    if x1 <= x0 or y1 <= y0:
        return None
    return BoxRecord(
        id=new_id,
        image_id=tile_id,
        x=x0 - tx,
        y=y0 - ty,
        w=x1 - x0,
        h=y1 - y0,
        category=category or b.category,
        uncertain=b.uncertain,
    )


def _tile_name(file_path: str, ox: float, oy: float) -> str:
    p = Path(file_path or "image.png")
    suffix = p.suffix or ".png"
    return str(p.with_name(f"{p.stem}__{ox:g}_{oy:g}{suffix}"))


def cut_dataset(
    ds: DatasetAnnotations,
    tile_w: float = DEFAULT_TILE,
    tile_h: float = DEFAULT_TILE,
    overlap: float = DEFAULT_OVERLAP,
    image_dir_in: str | os.PathLike | None = None,
    image_dir_out: str | os.PathLike | None = None,
    fill_value: Sequence[float] | None = None,
    workers: int | None = None,
) -> TiledDataset:
    """Split every image into tiles; tile ids are consecutive integers from 1.

    When both image directories are given the tile crops are written to
    ``image_dir_out``; ``fill_value`` additionally paints each tile's ignore
    regions and uncertain boxes with that value first.
    """
    images: list[ImageRecord] = []
    boxes: list[BoxRecord] = []
    provenance: dict[Any, TileOrigin] = {}
    crops = []
    next_tile, next_box = 1, 1
    for img in ds.images:
        spec = plan_tiles(img, tile_w, tile_h, overlap)
        parent_boxes = ds.boxes_by_image[img.image_id]
        for ox, oy in spec.offsets:
            rect = spec.rect(ox, oy)
            tile_id = next_tile
            next_tile += 1
            tile_boxes = []
            for b in parent_boxes:
                inter = intersection(b.xywh, rect)
                if inter <= 0:
                    continue
                category = None
                if not b.is_ignore_region and inter < MIN_AREA_FRACTION * b.area:
                    category = IGNORE_REGION
                clipped = _clip_rebase(b, rect, next_box, tile_id, category)
                if clipped is not None:
                    tile_boxes.append(clipped)
                    next_box += 1
            name = _tile_name(img.file_path, ox, oy)
            images.append(ImageRecord(tile_id, rect[2], rect[3], name, img.source_video))
            boxes.extend(tile_boxes)
            background = not any(b.is_target() for b in tile_boxes)
            provenance[tile_id] = TileOrigin(tile_id, img.image_id, ox, oy, rect[2], rect[3], background)
            if image_dir_in is not None and image_dir_out is not None:
                masks = [b.xywh for b in tile_boxes if b.is_ignore_region or b.uncertain]
                crops.append((Path(image_dir_in) / img.file_path, Path(image_dir_out) / name, rect, masks))

    if crops:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(_write_crop, *job, fill_value) for job in crops]:
                fut.result()
    return TiledDataset(DatasetAnnotations(tuple(images), tuple(boxes), name=ds.name), provenance)


def _write_crop(src: Path, dst: Path, rect, masks, fill_value) -> None:
    if not src.is_file():
        raise MissingImageFile(f"image file not found: {src}")
    x, y, w, h = (int(round(v)) for v in rect)
    with Image.open(src) as im:
        tile = im.crop((x, y, x + w, y + h))
    if fill_value is not None and masks:
        pixels = fill_ignore_regions(np.asarray(tile), masks, fill_value)
        tile = Image.fromarray(pixels)
    dst.parent.mkdir(parents=True, exist_ok=True)
    tile.save(dst)


def fill_ignore_regions(pixels: np.ndarray, boxes: Iterable, fill_value) -> np.ndarray:
    """Return a copy with every pixel touched by a box set to ``fill_value``.

    ``boxes`` holds ``(x, y, w, h)`` tuples or :class:`BoxRecord` objects;
    for records only ignore regions and uncertain boxes are filled.
    """
    out = np.array(pixels, copy=True)
    height, width = out.shape[:2]
    value = np.asarray(fill_value, dtype=float)
    if out.ndim == 3 and value.ndim == 0:
        value = np.full(out.shape[2], float(value))
    if np.issubdtype(out.dtype, np.integer):
        info = np.iinfo(out.dtype)
        value = np.clip(np.round(value), info.min, info.max)
    for box in boxes:
        if isinstance(box, BoxRecord):
            if not (box.is_ignore_region or box.uncertain):
                continue
            box = box.xywh
        x, y, w, h = box
        c0, r0 = max(0, int(np.floor(x))), max(0, int(np.floor(y)))
        c1, r1 = min(width, int(np.ceil(x + w))), min(height, int(np.ceil(y + h)))
        if c1 > c0 and r1 > r0:
            out[r0:r1, c0:c1] = value.astype(out.dtype)
    return out


def mean_pixel_value(paths: Iterable[str | os.PathLike]) -> np.ndarray:
    """Per-channel mean over all pixels of the given images."""
    total = None
    count = 0
    for p in paths:
        with Image.open(p) as im:
            a = np.asarray(im, dtype=np.float64)
        if a.ndim == 2:
            a = a[..., None]
        s = a.reshape(-1, a.shape[-1]).sum(axis=0)
        total = s if total is None else total + s
        count += a.shape[0] * a.shape[1]
    if total is None:
        raise MissingImageFile("no images to average")
    return total / count


def merge_detections(
    tile_dets: DetectionSet,
    provenance: dict[Any, TileOrigin],
    nms_iou: float = 0.5,
    cap_per_image: int | None = None,
) -> DetectionSet:
    """Shift tile detections back to parent coordinates, run NMS per parent, then cap."""
    cap = cap_per_image or tile_dets.cap_per_image
    per_parent: dict[Any, list[Detection]] = {}
    for d in tile_dets.detections:
        origin = provenance.get(d.image_id)
        if origin is None:
            raise UnknownTile(f"detection references tile {d.image_id!r} with no provenance")
        per_parent.setdefault(origin.parent_id, []).append(
            Detection(origin.parent_id, d.x + origin.ox, d.y + origin.oy, d.w, d.h, d.score)
        )
    merged: list[Detection] = []
    for dets in per_parent.values():
        keep = nms([d.xywh for d in dets], [d.score for d in dets], nms_iou)
        merged.extend(dets[i] for i in keep)
    return DetectionSet(tuple(merged), cap).capped()


def provenance_to_dict(tiled: TiledDataset, tile_w=None, tile_h=None, overlap=None) -> dict:
    return {
        "schema": PROVENANCE_SCHEMA,
        "tile_w": tile_w,
        "tile_h": tile_h,
        "overlap": overlap,
        "tiles": [
            {
                "tile_id": o.tile_id,
                "parent_id": o.parent_id,
                "ox": o.ox,
                "oy": o.oy,
                "width": o.width,
                "height": o.height,
                "background": o.background,
            }
            for o in tiled.provenance.values()
        ],
    }


def provenance_from_dict(raw: dict) -> dict[Any, TileOrigin]:
    return {
        t["tile_id"]: TileOrigin(
            t["tile_id"], t["parent_id"], t["ox"], t["oy"], t["width"], t["height"], bool(t.get("background", False))
        )
        for t in raw["tiles"]
    }
