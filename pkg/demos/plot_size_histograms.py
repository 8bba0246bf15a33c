"""
Size statistics and the rectified histogram
===========================================

Tiny-person datasets have a long right tail of object sizes.  A plain
equal-width histogram spends most of its bins on that tail, so most bins are
nearly empty.  Folding the extremes into the first and last bin fixes that.
"""

import math

import numpy as np

from scalematch import (
    LogNormal,
    SynthSpec,
    dataset_statistics,
    generate,
    object_sizes,
    rectified_histogram,
    sparse_rate,
    uniform_histogram,
)

# A synthetic stand-in for a tiny-person training set: median box size 18 px
ds = generate(SynthSpec(n_images=2000, size_law=LogNormal(math.log(18), 0.8), seed=0))
for name, (mean, std) in dataset_statistics(ds).items():
    print(f"{name:>14}: {mean:.3f} +- {std:.3f}")

sizes = object_sizes(ds)
print("objects:", sizes.size, " largest:", round(sizes.max(), 1), "px")

###############################################################################
# Equal-width bins versus rectified bins, K = 100

plain = uniform_histogram(sizes, k=100)
rect = rectified_histogram(sizes, k=100)
print("sparse rate, plain     :", sparse_rate(plain))
print("sparse rate, rectified :", sparse_rate(rect))

# the first and last rectified bin each hold ceil(N / K) objects
print("tail count:", rect.tail, " first bin:", rect.ranges[0], " last bin:", rect.ranges[-1])

###############################################################################
# The histogram is also a CSV-able table
for lo, hi, p in rect.to_rows()[:5]:
    print(f"[{lo:7.2f}, {hi:7.2f})  {p:.4f}")
print("...")
print("sum of probabilities:", np.sum(rect.probs))
