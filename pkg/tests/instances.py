"""Random small detection problems shared by the evaluation and acceptance tests."""

from __future__ import annotations

import numpy as np

from scalematch.dataset import IGNORE_REGION, PERSON, BoxRecord, DatasetAnnotations, Detection, DetectionSet, ImageRecord


def random_instance(rng: np.random.Generator, max_images=5, max_gt=8, max_dets=8, ignore=True, uncertain=False):
    """Crowded boxes on a small canvas so that overlaps and competing matches are common."""
    n_images = int(rng.integers(1, max_images + 1))
    images, boxes, dets = [], [], []
    bid = 1
    for i in range(1, n_images + 1):
        images.append(ImageRecord(i, 200.0, 200.0, f"{i}.png"))
        gts = []
        for _ in range(int(rng.integers(0, max_gt + 1))):
            w, h = rng.uniform(3, 30, 2)
            x, y = rng.uniform(0, 60, 2)
            gts.append((x, y, w, h))
            boxes.append(BoxRecord(bid, i, x, y, w, h, PERSON, bool(uncertain and rng.random() < 0.2)))
            bid += 1
        if ignore and rng.random() < 0.5:
            w, h = rng.uniform(20, 60, 2)
            x, y = rng.uniform(0, 120, 2)
            boxes.append(BoxRecord(bid, i, x, y, w, h, IGNORE_REGION))
            bid += 1
        for _ in range(int(rng.integers(0, max_dets + 1))):
            if gts and rng.random() < 0.7:
                x, y, w, h = gts[int(rng.integers(len(gts)))]
                jx, jy = rng.normal(0, 0.2 * w), rng.normal(0, 0.2 * h)
                sw, sh = np.exp(rng.normal(0, 0.2, 2))
                box = (x + jx, y + jy, w * sw, h * sh)
            else:
                box = (*rng.uniform(0, 80, 2), *rng.uniform(3, 30, 2))
            score = round(float(rng.random()), 2)
            dets.append(Detection(i, *map(float, box), score))
    return DatasetAnnotations(tuple(images), tuple(boxes)), DetectionSet(tuple(dets))


def flags_from_cell(cell) -> list[bool]:
    """Recover the TP/FP sequence of a cell from its cumulative counts."""
    if cell.recall.size == 0:
        return []
    tp = np.round(cell.recall * cell.n_gt).astype(int)
    return list(np.diff(np.concatenate([[0], tp])) == 1)
