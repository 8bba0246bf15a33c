"""
Anchor sizes from k-means
=========================

One-dimensional k-means on box sizes and on aspect ratios gives anchor
settings that fit the data rather than the defaults of a large-object model.
"""

import math

from scalematch import LogNormal, SynthSpec, UniformAspect, cluster_anchors, generate

ds = generate(
    SynthSpec(n_images=1000, size_law=LogNormal(math.log(18), 0.8), aspect_law=UniformAspect(0.4, 0.9), seed=4)
)
sizes, ratios = cluster_anchors(ds, k_sizes=5, k_ratios=3, seed=0)
print("anchor sizes :", [round(s, 2) for s in sizes])
print("aspect ratios:", [round(r, 3) for r in ratios])
