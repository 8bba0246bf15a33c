"""Object-size statistics.

Sizes are the square root of box area (absolute, in pixels) or of the box
area divided by the image area (relative).  The rectified histogram folds
the ``ceil(N / K)`` smallest and largest sizes into the first and last bin
and spreads the remaining sizes over ``K - 2`` equal-width bins, which keeps
long-tailed size distributions from leaving most bins empty.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from scalematch.dataset import BoxRecord, DatasetAnnotations, ImageRecord
from scalematch.errors import DegenerateSupport, EmptyInput, InsufficientData

__all__ = [
    "absolute_size",
    "relative_size",
    "aspect_ratio",
    "object_sizes",
    "dataset_statistics",
    "RectifiedHistogram",
    "rectified_histogram",
    "uniform_histogram",
    "sparse_rate",
    "EmpiricalCdf",
    "empirical_cdf",
    "histogram_cdf",
    "kmeans_1d",
    "cluster_anchors",
]

DEFAULT_BINS = 100
DEFAULT_ALPHA = 10.0

SizeSource = Union[DatasetAnnotations, Sequence[float], np.ndarray]


def absolute_size(box: BoxRecord) -> float:
    return math.sqrt(box.w * box.h)


def relative_size(box: BoxRecord, img: ImageRecord) -> float:
    return math.sqrt((box.w * box.h) / (img.width * img.height))


def aspect_ratio(box: BoxRecord) -> float:
    """Width over height."""
    return box.w / box.h


def _selected_boxes(ds: DatasetAnnotations, include_ignore: bool, include_uncertain: bool) -> list[BoxRecord]:
    out = []
    for b in ds.boxes:
        if b.is_ignore_region and not include_ignore:
            continue
        if b.uncertain and not include_uncertain:
            continue
        out.append(b)
    return out


def object_sizes(
    ds: DatasetAnnotations, include_ignore: bool = False, include_uncertain: bool = False
) -> np.ndarray:
    """Absolute sizes of the dataset's objects (persons only by default)."""
    boxes = _selected_boxes(ds, include_ignore, include_uncertain)
    return np.array([absolute_size(b) for b in boxes], dtype=float)


def dataset_statistics(
    ds: DatasetAnnotations, include_ignore: bool = False, include_uncertain: bool = False
) -> dict[str, tuple[float, float]]:
    """Mean and (population) standard deviation of absolute size, relative size and aspect ratio."""
    boxes = _selected_boxes(ds, include_ignore, include_uncertain)
    if not boxes:
        raise EmptyInput(f"dataset {ds.name!r} has no boxes to summarise")
    images = ds.image_by_id
    columns = {
        "absolute_size": [absolute_size(b) for b in boxes],
        "relative_size": [relative_size(b, images[b.image_id]) for b in boxes],
        "aspect_ratio": [aspect_ratio(b) for b in boxes],
    }
    return {name: (float(np.mean(v)), float(np.std(v))) for name, v in columns.items()}


def _as_sizes(source: SizeSource, include_ignore: bool = False, include_uncertain: bool = False) -> np.ndarray:
    if isinstance(source, DatasetAnnotations):
        return object_sizes(source, include_ignore, include_uncertain)
    return np.asarray(source, dtype=float).ravel()


# ---------------------------------------------------------------------------
# histograms


@dataclass(frozen=True, eq=False)
class RectifiedHistogram:
    """Bin probabilities ``probs`` over ranges ``[lows[k], highs[k]]``.

    Membership follows ``lo <= s < hi`` except for the bins listed in
    ``closed_right`` (``lo <= s <= hi``); ``open_left`` bins use ``lo < s``.
    For a rectified histogram the last middle bin and the last bin are
    right-closed and the last bin is left-open, so every size used to build
    the histogram is counted exactly once.
    """

    probs: np.ndarray
    lows: np.ndarray
    highs: np.ndarray
    n: int
    tail: int = 0
    closed_right: tuple[int, ...] = ()
    open_left: tuple[int, ...] = ()

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        lows = np.asarray(self.lows, dtype=float)
        highs = np.asarray(self.highs, dtype=float)
        if not (probs.shape == lows.shape == highs.shape) or probs.ndim != 1 or probs.size == 0:
            raise ValueError("probs, lows and highs must be equal-length 1-D arrays")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-9):
            raise ValueError("bin probabilities must be non-negative and sum to 1")
        if np.any(highs < lows) or np.any(np.diff(lows) < 0) or np.any(lows[1:] < highs[:-1]):
            raise ValueError("bin ranges must be ordered and non-overlapping")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "lows", lows)
        object.__setattr__(self, "highs", highs)

    @property
    def k(self) -> int:
        return int(self.probs.size)

    @property
    def ranges(self) -> list[tuple[float, float]]:
        return list(zip(self.lows.tolist(), self.highs.tolist()))

    @property
    def support(self) -> tuple[float, float]:
        return float(self.lows[0]), float(self.highs[-1])

    def bin_index(self, sizes) -> np.ndarray:
        """Bin of each size under the boundary convention, ``-1`` outside every bin."""
        s = np.atleast_1d(np.asarray(sizes, dtype=float))
        out = np.full(s.shape, -1, dtype=int)
        closed = np.zeros(self.k, dtype=bool)
        closed[list(self.closed_right)] = True
        opened = np.zeros(self.k, dtype=bool)
        opened[list(self.open_left)] = True
        for k in range(self.k):
            lo, hi = self.lows[k], self.highs[k]
            lower = s > lo if opened[k] else s >= lo
            upper = s <= hi if closed[k] else s < hi
            out[(out < 0) & lower & upper] = k
        return out

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [(float(lo), float(hi), float(p)) for lo, hi, p in zip(self.lows, self.highs, self.probs)]


def rectified_histogram(
    source: SizeSource,
    k: int = DEFAULT_BINS,
    include_ignore: bool = False,
    include_uncertain: bool = False,
) -> RectifiedHistogram:
    """Estimate the size distribution with a tail-rectified histogram.

    The first ``tail = ceil(N / k)`` sorted sizes form the first bin and the
    last ``tail`` the last bin, each with probability ``tail / N``.  The sizes
    in between are split into ``k - 2`` equal-width bins.  The cut is made by
    sorted index, so equal sizes straddling a cut may land in different bins.

    If all middle sizes are equal a :class:`DegenerateSupport` warning is
    emitted and the middle collapses into one zero-width bin (3 bins total).
    """
    if k <= 2:
        raise ValueError(f"k must be > 2, got {k}")
    sizes = np.sort(_as_sizes(source, include_ignore, include_uncertain))
    n = sizes.size
    if n < k:
        raise InsufficientData(f"need at least k={k} sizes, got {n}")
    tail = -(-n // k)
    middle = sizes[tail : n - tail]
    if middle.size == 0:
        raise InsufficientData(f"{n} sizes leave no middle bins after removing 2 x {tail} tail sizes")

    lo_mid, hi_mid = float(middle[0]), float(middle[-1])
    if hi_mid == lo_mid:
        warnings.warn(
            f"all {middle.size} middle sizes equal {lo_mid}; using a single middle bin",
            DegenerateSupport,
            stacklevel=2,
        )
        mid_counts = np.array([middle.size])
        mid_lows = np.array([lo_mid])
        mid_highs = np.array([hi_mid])
    else:
        width = (hi_mid - lo_mid) / (k - 2)
        edges = lo_mid + np.arange(k - 1) * width
        edges[-1] = hi_mid
        mid_counts, _ = np.histogram(middle, bins=edges)
        mid_lows, mid_highs = edges[:-1], edges[1:]

    counts = np.concatenate([[tail], mid_counts, [tail]])
    lows = np.concatenate([[sizes[0]], mid_lows, [hi_mid]])
    highs = np.concatenate([[lo_mid], mid_highs, [sizes[-1]]])
    n_bins = counts.size
    return RectifiedHistogram(
        probs=counts / n,
        lows=lows,
        highs=highs,
        n=n,
        tail=tail,
        closed_right=(n_bins - 2, n_bins - 1),
        open_left=(n_bins - 1,),
    )


def uniform_histogram(source: SizeSource, k: int = DEFAULT_BINS, **select) -> RectifiedHistogram:
    """Plain ``k``-bin equal-width histogram over ``[min, max]`` (last bin closed)."""
    sizes = _as_sizes(source, **select)
    if sizes.size == 0:
        raise EmptyInput("no sizes to histogram")
    lo, hi = float(sizes.min()), float(sizes.max())
    if lo == hi:
        return RectifiedHistogram(np.array([1.0]), np.array([lo]), np.array([hi]), n=sizes.size, closed_right=(0,))
    counts, edges = np.histogram(sizes, bins=k, range=(lo, hi))
    return RectifiedHistogram(counts / sizes.size, edges[:-1], edges[1:], n=sizes.size, closed_right=(k - 1,))


def sparse_rate(h: RectifiedHistogram, alpha: float = DEFAULT_ALPHA) -> float:
    """Fraction of bins whose probability is at most ``1 / (alpha * K)``."""
    threshold = 1.0 / (alpha * h.k)
    return float(np.count_nonzero(h.probs <= threshold)) / h.k


# ---------------------------------------------------------------------------
# cumulative distributions


@dataclass(frozen=True, eq=False)
class EmpiricalCdf:
    """Right-continuous piecewise-linear CDF through ``(support[i], values[i])``.

    ``support`` is non-decreasing; a repeated support point encodes a jump.
    ``F(s) = 0`` below the first point and ``1`` from the last point on.
    """

    support: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.support, dtype=float)
        f = np.asarray(self.values, dtype=float)
        if x.shape != f.shape or x.ndim != 1 or x.size == 0:
            raise ValueError("support and values must be equal-length non-empty 1-D arrays")
        if np.any(np.diff(x) < 0) or np.any(np.diff(f) < 0):
            raise ValueError("support and values must be non-decreasing")
        if f[0] < 0 or f[-1] != 1.0:
            raise ValueError("CDF values must start >= 0 and end at 1")
        object.__setattr__(self, "support", x)
        object.__setattr__(self, "values", f)

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.support[0]), float(self.support[-1])

    def __call__(self, s):
        x = np.asarray(s, dtype=float)
        xs, fs = self.support, self.values
        j = np.searchsorted(xs, x, side="right") - 1
        jc = np.clip(j, 0, xs.size - 2) if xs.size > 1 else np.zeros_like(j)
        if xs.size > 1:
            x0, x1 = xs[jc], xs[jc + 1]
            f0, f1 = fs[jc], fs[jc + 1]
            with np.errstate(divide="ignore", invalid="ignore"):
                inner = f0 + (f1 - f0) * (x - x0) / (x1 - x0)
        else:
            inner = np.ones_like(x)
        out = np.where(j < 0, 0.0, np.where(j >= xs.size - 1, 1.0, inner))
        return float(out) if out.ndim == 0 else out

    def inverse(self, q):
        """Generalised inverse ``inf{s : F(s) >= q}`` for ``q`` in ``[0, 1]``."""
        qq = np.clip(np.asarray(q, dtype=float), 0.0, 1.0)
        xs, fs = self.support, self.values
        i = np.searchsorted(fs, qq, side="left")
        ic = np.clip(i, 1, xs.size - 1) if xs.size > 1 else np.zeros_like(i)
        if xs.size > 1:
            x0, x1 = xs[ic - 1], xs[ic]
            f0, f1 = fs[ic - 1], fs[ic]
            with np.errstate(divide="ignore", invalid="ignore"):
                inner = x0 + (qq - f0) / (f1 - f0) * (x1 - x0)
            inner = np.where(f1 > f0, inner, x1)
        else:
            inner = np.full_like(qq, xs[0])
        out = np.where(i <= 0, xs[0], inner)
        return float(out) if out.ndim == 0 else out


def empirical_cdf(sizes: Sequence[float]) -> EmpiricalCdf:
    """CDF through the sorted sizes, rising linearly from 0 at the minimum to 1 at the maximum."""
    s = np.sort(np.asarray(sizes, dtype=float).ravel())
    if s.size == 0:
        raise EmptyInput("empirical_cdf needs at least one size")
    if s.size == 1:
        return EmpiricalCdf(np.array([s[0], s[0]]), np.array([0.0, 1.0]))
    values = np.arange(s.size) / (s.size - 1)
    values[-1] = 1.0
    return EmpiricalCdf(s, values)


def histogram_cdf(h: RectifiedHistogram) -> EmpiricalCdf:
    """CDF of the histogram with each bin's mass spread uniformly over its range."""
    cum = np.cumsum(h.probs)
    cum = cum / cum[-1]
    before = np.concatenate([[0.0], cum[:-1]])
    support = np.column_stack([h.lows, h.highs]).ravel()
    values = np.column_stack([before, cum]).ravel()
    values[-1] = 1.0
    # cumsum round-off must not break monotonicity
    values = np.maximum.accumulate(values)
    return EmpiricalCdf(support, values)


# ---------------------------------------------------------------------------
# anchor clustering


def kmeans_1d(
    values: Sequence[float], k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6
) -> np.ndarray:
    """Lloyd's k-means on scalars with k-means++ seeding; centers returned ascending.

    Input is sorted first, so the result does not depend on input order.
    """
    x = np.sort(np.asarray(values, dtype=float).ravel())
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.size < k:
        raise InsufficientData(f"need at least {k} values, got {x.size}")
    rng = np.random.default_rng(seed)

    centers = [x[rng.integers(x.size)]]
    for _ in range(1, k):
        d2 = np.min((x[:, None] - np.array(centers)[None, :]) ** 2, axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(x.size)])
            continue
        cum = np.cumsum(d2)
        idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
        centers.append(x[min(idx, x.size - 1)])
    c = np.array(centers, dtype=float)

    for _ in range(max_iter):
        labels = np.argmin(np.abs(x[:, None] - c[None, :]), axis=1)
        new = c.copy()
        for j in range(k):
            members = x[labels == j]
            if members.size:
                new[j] = members.mean()
        shift = np.max(np.abs(new - c))
        c = new
        if shift < tol:
            break
    return np.sort(c)


def cluster_anchors(
    ds: DatasetAnnotations, k_sizes: int = 5, k_ratios: int = 3, seed: int = 0
) -> tuple[list[float], list[float]]:
    """Cluster person-box absolute sizes and aspect ratios (w/h) independently."""
    boxes = ds.target_boxes()
    if len(boxes) < max(k_sizes, k_ratios):
        raise InsufficientData(f"need at least {max(k_sizes, k_ratios)} person boxes, got {len(boxes)}")
    sizes = kmeans_1d([absolute_size(b) for b in boxes], k_sizes, seed)
    ratios = kmeans_1d([aspect_ratio(b) for b in boxes], k_ratios, seed)
    return sizes.tolist(), ratios.tolist()
