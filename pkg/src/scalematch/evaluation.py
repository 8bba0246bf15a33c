"""Tiny-person evaluation: size-partitioned AP and log-average miss rate.

Matching per image and IoU threshold:

1. detections are visited by descending score and each takes the unmatched
   in-partition ground truth with the highest IoU >= threshold (ties go to
   the earlier ground-truth id); when all its candidates are taken, earlier
   detections are shifted to alternative ground truths if that frees one;
2. a still unmatched detection is *ignored* if its IoD with an ignore region
   is >= threshold, or its IoU with an out-of-partition person is >= threshold;
3. everything else is a false positive.

Uncertain boxes count as ignore regions unless ``uncertain_as_ignore`` is off.
Ignored detections are dropped before the precision/recall and miss-rate
curves are built.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from scalematch.boxes import iod, iod_matrix, iou, iou_matrix
from scalematch.dataset import BoxRecord, DatasetAnnotations, Detection, DetectionSet
from scalematch.errors import ImageIdMismatch
from scalematch.sizes import absolute_size

__all__ = [
    "TP",
    "FP",
    "IGNORED",
    "MATCHED",
    "MISSED",
    "OUT_OF_RANGE",
    "IGNORE",
    "SizeRange",
    "DEFAULT_PARTITIONS",
    "DEFAULT_FPPI_POINTS",
    "EvalConfig",
    "ImageMatch",
    "CellResult",
    "EvalReport",
    "iou",
    "iod",
    "match_image",
    "average_precision",
    "miss_rate",
    "evaluate",
]

TP, FP, IGNORED = "tp", "fp", "ignored"
MATCHED, MISSED, OUT_OF_RANGE, IGNORE = "matched", "missed", "out_of_range", "ignore"

REPORT_SCHEMA = "scalematch.evalreport/1"


@dataclass(frozen=True)
class SizeRange:
    """Absolute-size interval ``[low, high)``; ``high`` may be ``inf``."""

    name: str
    low: float
    high: float = math.inf

    def __post_init__(self):
        if not self.low < self.high:
            raise ValueError(f"size range {self.name!r}: low must be < high")

    def __contains__(self, size: float) -> bool:
        return self.low <= size < self.high


DEFAULT_PARTITIONS = (
    SizeRange("tiny1", 2, 8),
    SizeRange("tiny2", 8, 12),
    SizeRange("tiny3", 12, 20),
    SizeRange("tiny", 2, 20),
    SizeRange("small", 20, 32),
    SizeRange("all", 2, math.inf),
)
DEFAULT_FPPI_POINTS = tuple(float(v) for v in np.logspace(-2.0, 0.0, 9))


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = (0.25, 0.5, 0.75)
    partitions: tuple[SizeRange, ...] = DEFAULT_PARTITIONS
    fppi_points: tuple[float, ...] = DEFAULT_FPPI_POINTS
    uncertain_as_ignore: bool = True

    def __post_init__(self):
        for t in self.iou_thresholds:
            if not 0.0 < t <= 1.0:
                raise ValueError(f"IoU threshold {t} outside (0, 1]")

    def to_dict(self) -> dict:
        return {
            "iou_thresholds": list(self.iou_thresholds),
            "partitions": [[p.name, p.low, None if math.isinf(p.high) else p.high] for p in self.partitions],
            "fppi_points": list(self.fppi_points),
            "uncertain_as_ignore": self.uncertain_as_ignore,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalConfig":
        kwargs: dict[str, Any] = {}
        if "iou_thresholds" in raw:
            kwargs["iou_thresholds"] = tuple(float(t) for t in raw["iou_thresholds"])
        if "partitions" in raw:
            kwargs["partitions"] = tuple(
                SizeRange(str(name), float(lo), math.inf if hi is None else float(hi)) for name, lo, hi in raw["partitions"]
            )
        if "fppi_points" in raw:
            kwargs["fppi_points"] = tuple(float(v) for v in raw["fppi_points"])
        if "uncertain_as_ignore" in raw:
            kwargs["uncertain_as_ignore"] = bool(raw["uncertain_as_ignore"])
        return cls(**kwargs)


@dataclass
class ImageMatch:
    """Labels aligned with the input order of detections and ground truths."""

    det_labels: list[str]
    gt_labels: list[str]
    det_to_gt: list[int | None]

    @property
    def n_tp(self) -> int:
        return self.det_labels.count(TP)


def _gt_roles(gts: Sequence[BoxRecord], size_range: SizeRange, uncertain_as_ignore: bool) -> list[str]:
    roles = []
    for g in gts:
        if g.is_ignore_region or (g.uncertain and uncertain_as_ignore):
            roles.append(IGNORE)
        elif absolute_size(g) in size_range:
            roles.append(MISSED)
        else:
            roles.append(OUT_OF_RANGE)
    return roles


def _assign(det_boxes: np.ndarray, gt_boxes: np.ndarray, scores: np.ndarray, threshold: float) -> dict[int, int]:
    """Score-ordered matching that never leaves a TP on the table.

    Detections are visited by descending score; among equal scores the one
    with the best IoU goes first, then input order.  Each takes the free
    ground truth with the highest IoU (earliest id on ties).  If every
    overlapping ground truth is taken, earlier detections are moved to other
    ground truths they also overlap (augmenting path) when that frees one; no
    earlier detection ever loses its match.  The TP count at every score
    threshold is therefore the maximum achievable by any one-to-one
    assignment.
    """
    ious = iou_matrix(det_boxes, gt_boxes)
    ok = ious >= threshold
    owner = np.full(gt_boxes.shape[0], -1, dtype=int)
    match: dict[int, int] = {}
    best = np.where(ok, ious, 0.0).max(axis=1)
    order = np.lexsort((np.arange(len(scores)), -best, -scores))

    def reroute(d: int, visited: set[int]) -> bool:
        for j in np.argsort(-ious[d], kind="stable"):
            if not ok[d, j] or j in visited:
                continue
            visited.add(j)
            if owner[j] < 0 or reroute(int(owner[j]), visited):
                owner[j] = d
                match[d] = int(j)
                return True
        return False

    for d in order:
        d = int(d)
        free = np.where(ok[d] & (owner < 0), ious[d], -1.0)
        j = int(np.argmax(free))
        if free[j] >= 0:
            owner[j] = d
            match[d] = j
        elif ok[d].any():
            reroute(d, set())
    return match


def match_image(
    dets: Sequence[Detection],
    gts: Sequence[BoxRecord],
    threshold: float,
    size_range: SizeRange = SizeRange("all", 2, math.inf),
    uncertain_as_ignore: bool = True,
) -> ImageMatch:
    roles = _gt_roles(gts, size_range, uncertain_as_ignore)
    n_det = len(dets)
    det_labels = [FP] * n_det
    det_to_gt: list[int | None] = [None] * n_det
    if n_det == 0:
        return ImageMatch([], roles, [])

    det_boxes = np.array([d.xywh for d in dets], dtype=float)
    scores = np.array([d.score for d in dets], dtype=float)

    target = [i for i, r in enumerate(roles) if r == MISSED]
    ignore = [i for i, r in enumerate(roles) if r == IGNORE]
    outside = [i for i, r in enumerate(roles) if r == OUT_OF_RANGE]
    gt_boxes = np.array([g.xywh for g in gts], dtype=float).reshape(-1, 4)

    if target:
        for d, j in _assign(det_boxes, gt_boxes[target], scores, threshold).items():
            det_labels[d] = TP
            det_to_gt[d] = target[j]
            roles[target[j]] = MATCHED

    unmatched = [d for d in range(n_det) if det_labels[d] != TP]
    if unmatched and (ignore or outside):
        hit = np.zeros(len(unmatched), dtype=bool)
        if ignore:
            hit |= (iod_matrix(det_boxes[unmatched], gt_boxes[ignore]) >= threshold).any(axis=1)
        if outside:
            hit |= (iou_matrix(det_boxes[unmatched], gt_boxes[outside]) >= threshold).any(axis=1)
        for d, h in zip(unmatched, hit):
            if h:
                det_labels[d] = IGNORED
    return ImageMatch(det_labels, roles, det_to_gt)


def average_precision(tp_flags: Sequence[bool], n_gt: int) -> float:
    """All-points interpolated AP over score-sorted, non-ignored detections."""
    if n_gt <= 0:
        return math.nan
    flags = np.asarray(tp_flags, dtype=bool)
    tp = np.cumsum(flags)
    precision = tp / np.maximum(np.arange(1, flags.size + 1), 1)
    # precision envelope: best precision at this recall or any higher one
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # each TP raises recall by exactly 1 / n_gt; summing counts first keeps
    # a perfect ranking at exactly 1.0
    return float(np.sum(envelope[flags]) / n_gt)


def miss_rate(
    tp_flags: Sequence[bool], n_gt: int, n_images: int, fppi_points: Sequence[float] = DEFAULT_FPPI_POINTS
) -> float:
    """Log-average miss rate over the reference FPPI points.

    At each point the curve is read at the lowest score threshold whose FPPI
    does not exceed it; before the first detection the miss rate is 1.
    """
    if n_gt <= 0:
        return math.nan
    flags = np.asarray(tp_flags, dtype=bool)
    fppi = np.concatenate([[0.0], np.cumsum(~flags) / max(n_images, 1)])
    miss = np.concatenate([[1.0], 1.0 - np.cumsum(flags) / n_gt])
    idx = np.searchsorted(fppi, np.asarray(fppi_points, dtype=float), side="right") - 1
    sampled = miss[np.clip(idx, 0, None)]
    if np.any(sampled <= 0):
        return 0.0
    return float(np.exp(np.mean(np.log(sampled))))


@dataclass
class CellResult:
    partition: str
    threshold: float
    ap: float
    mr: float
    tp: int
    fp: int
    fn: int
    n_gt: int
    n_ignored: int
    recall: np.ndarray = field(repr=False)
    precision: np.ndarray = field(repr=False)
    scores: np.ndarray = field(repr=False)

    def to_dict(self, curves: bool = False) -> dict:
        out = {
            "partition": self.partition,
            "iou_threshold": self.threshold,
            "ap": self.ap,
            "mr": self.mr,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "n_gt": self.n_gt,
            "n_ignored": self.n_ignored,
        }
        if curves:
            out["recall"] = self.recall.tolist()
            out["precision"] = self.precision.tolist()
        return out


@dataclass
class EvalReport:
    cells: dict[tuple[str, float], CellResult]
    config: EvalConfig
    n_images: int

    def __getitem__(self, key: tuple[str, float]) -> CellResult:
        return self.cells[key]

    def to_dict(self, curves: bool = False) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "n_images": self.n_images,
            "config": self.config.to_dict(),
            "cells": [c.to_dict(curves) for c in self.cells.values()],
        }

    def format_table(self, metric: str = "both") -> str:
        """Rows are metric@IoU, columns are size partitions; values in percent."""
        names = [p.name for p in self.config.partitions]
        metrics = ["mr", "ap"] if metric == "both" else [metric]
        header = f"{'':>10}" + "".join(f"{n:>10}" for n in names)
        lines = [header]
        for m in metrics:
            for t in self.config.iou_thresholds:
                row = f"{m.upper()}@{int(round(t * 100)):<7d}"
                for n in names:
                    v = getattr(self.cells[(n, t)], m)
                    row += f"{'n/a' if math.isnan(v) else f'{100 * v:.2f}':>10}"
                lines.append(row)
        return "\n".join(lines)


def evaluate(dets: DetectionSet, gt: DatasetAnnotations, cfg: EvalConfig | None = None) -> EvalReport:
    cfg = cfg or EvalConfig()
    known = gt.image_by_id
    stray = {d.image_id for d in dets.detections if d.image_id not in known}
    if stray:
        raise ImageIdMismatch(f"{len(stray)} detection image id(s) not in ground truth, e.g. {next(iter(stray))!r}")

    per_image = dets.capped().by_image()
    n_images = len(gt.images)
    cells: dict[tuple[str, float], CellResult] = {}
    for t in cfg.iou_thresholds:
        for part in cfg.partitions:
            scores: list[float] = []
            labels: list[str] = []
            n_gt = 0
            tp_count = 0
            for img in gt.images:
                gts = gt.boxes_by_image[img.image_id]
                img_dets = per_image.get(img.image_id, [])
                m = match_image(img_dets, gts, t, part, cfg.uncertain_as_ignore)
                n_gt += sum(r in (MATCHED, MISSED) for r in m.gt_labels)
                tp_count += m.gt_labels.count(MATCHED)
                scores.extend(d.score for d in img_dets)
                labels.extend(m.det_labels)
            sc = np.asarray(scores, dtype=float)
            lab = np.asarray(labels, dtype=object)
            order = np.argsort(-sc, kind="stable")
            sc, lab = sc[order], lab[order]
            kept = lab != IGNORED
            flags = lab[kept] == TP
            tp_cum = np.cumsum(flags)
            fp_cum = np.cumsum(~flags)
            recall = tp_cum / n_gt if n_gt else np.full(flags.shape, np.nan)
            precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
            cells[(part.name, t)] = CellResult(
                partition=part.name,
                threshold=t,
                ap=average_precision(flags, n_gt),
                mr=miss_rate(flags, n_gt, n_images, cfg.fppi_points),
                tp=tp_count,
                fp=int(np.count_nonzero(~flags)),
                fn=n_gt - tp_count,
                n_gt=n_gt,
                n_ignored=int(np.count_nonzero(~kept)),
                recall=recall,
                precision=precision,
                scores=sc[kept],
            )
    return EvalReport(cells, cfg, n_images)
