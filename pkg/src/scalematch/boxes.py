"""Box geometry on ``(x, y, w, h)`` boxes: IoU, IoD and greedy NMS."""

from __future__ import annotations

import numpy as np

__all__ = ["intersection", "iou", "iod", "iou_matrix", "iod_matrix", "nms"]


def _as_array(boxes) -> np.ndarray:
    a = np.asarray(boxes, dtype=float)
    return a.reshape(-1, 4)


def intersection(a, b) -> float:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a, b) -> float:
    inter = intersection(a, b)
    if inter == 0.0:
        return 0.0
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def iod(det, region) -> float:
    """Intersection over the detection's own area."""
    return intersection(det, region) / (det[2] * det[3])


def _inter_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    x0 = np.maximum(a[:, None, 0], b[None, :, 0])
    y0 = np.maximum(a[:, None, 1], b[None, :, 1])
    x1 = np.minimum(a[:, None, 0] + a[:, None, 2], b[None, :, 0] + b[None, :, 2])
    y1 = np.minimum(a[:, None, 1] + a[:, None, 3], b[None, :, 1] + b[None, :, 3])
    return np.clip(x1 - x0, 0, None) * np.clip(y1 - y0, 0, None)


def iou_matrix(a, b) -> np.ndarray:
    a, b = _as_array(a), _as_array(b)
    inter = _inter_matrix(a, b)
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    return np.where(inter > 0, inter / np.where(union > 0, union, 1.0), 0.0)


def iod_matrix(dets, regions) -> np.ndarray:
    d, r = _as_array(dets), _as_array(regions)
    return _inter_matrix(d, r) / (d[:, 2] * d[:, 3])[:, None]


def nms(boxes, scores, iou_threshold: float = 0.5) -> list[int]:
    """Greedy NMS; returns kept indices in processing order.

    Boxes are visited by descending score; equal scores visit the larger box
    first, then input order.  A box is suppressed when its IoU with an
    already kept box exceeds ``iou_threshold``.
    """
    b = _as_array(boxes)
    s = np.asarray(scores, dtype=float)
    if b.shape[0] == 0:
        return []
    area = b[:, 2] * b[:, 3]
    order = np.lexsort((np.arange(len(s)), -area, -s))
    ious = iou_matrix(b, b)
    suppressed = np.zeros(len(s), dtype=bool)
    keep = []
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        suppressed |= ious[i] > iou_threshold
    return keep
