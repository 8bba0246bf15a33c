"""Object-size distribution matching and tiny-object detection evaluation."""

from scalematch.dataset import (
    BoxRecord,
    DatasetAnnotations,
    Detection,
    DetectionSet,
    ImageRecord,
    load_annotations,
    load_detections,
    save_annotations,
    save_detections,
)
from scalematch.evaluation import EvalConfig, SizeRange, evaluate, match_image
from scalematch.sizes import (
    absolute_size,
    aspect_ratio,
    cluster_anchors,
    dataset_statistics,
    empirical_cdf,
    histogram_cdf,
    object_sizes,
    rectified_histogram,
    relative_size,
    sparse_rate,
    uniform_histogram,
)
from scalematch.synth import FixedAspect, LogNormal, Mixture, PointMass, SynthSpec, Uniform, UniformAspect, generate
from scalematch.tiling import cut_dataset, merge_detections, plan_tiles
from scalematch.transform import (
    ScalePlan,
    apply_scale_plan,
    build_monotone_map,
    build_monotone_plan,
    build_scale_plan,
)

__version__ = "0.1.0"
