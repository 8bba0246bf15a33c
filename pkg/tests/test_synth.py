import math

import numpy as np
import pytest
from PIL import Image
from scipy import stats

from scalematch.dataset import save_annotations
from scalematch.errors import InfeasiblePlacement
from scalematch.sizes import absolute_size, aspect_ratio, object_sizes
from scalematch.synth import (
    FixedAspect,
    LogNormal,
    Mixture,
    PointMass,
    SynthSpec,
    Uniform,
    UniformAspect,
    generate,
    parse_law,
    write_blank_images,
)


def test_point_mass_sizes():
    ds = generate(SynthSpec(n_images=100, boxes_per_image=(5, 5), size_law=PointMass(10)))
    assert len(ds.boxes) == 500
    assert all(abs(absolute_size(b) - 10) < 1e-6 for b in ds.boxes)


def test_lognormal_median():
    ds = generate(SynthSpec(n_images=1000, boxes_per_image=(10, 10), size_law=LogNormal(math.log(18), 0.8)))
    assert len(ds.boxes) == 10_000
    assert abs(np.median(object_sizes(ds)) / 18 - 1) <= 0.05


def test_box_too_large():
    with pytest.raises(InfeasiblePlacement):
        generate(SynthSpec(n_images=1, boxes_per_image=(1, 1), size_law=PointMass(500), image_dims=(100, 100)))


def test_boxes_lie_inside_images_with_requested_aspect():
    ds = generate(SynthSpec(n_images=50, aspect_law=UniformAspect(0.4, 0.9), image_dims=(300, 200), size_law=Uniform(2, 60)))
    for b in ds.boxes:
        assert 0 <= b.x and b.x + b.w <= 300 and 0 <= b.y and b.y + b.h <= 200
        assert 0.4 <= aspect_ratio(b) <= 0.9
    fixed = generate(SynthSpec(n_images=5, aspect_law=FixedAspect(0.5)))
    assert all(aspect_ratio(b) == pytest.approx(0.5) for b in fixed.boxes)


def test_same_seed_same_bytes(tmp_path):
    spec = SynthSpec(n_images=20, ignore_fraction=0.1, uncertain_fraction=0.1, seed=5)
    save_annotations(generate(spec), tmp_path / "a.json")
    save_annotations(generate(spec), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_fresh_draws_are_statistically_alike():
    law = LogNormal(math.log(18), 0.8)
    a = object_sizes(generate(SynthSpec(n_images=400, size_law=law, seed=1)))
    b = object_sizes(generate(SynthSpec(n_images=400, size_law=law, seed=2)))
    assert stats.ks_2samp(a, b).pvalue > 0.001


def test_flag_fractions():
    ds = generate(SynthSpec(n_images=500, ignore_fraction=0.2, uncertain_fraction=0.1, seed=3))
    n = len(ds.boxes)
    assert abs(sum(b.is_ignore_region for b in ds.boxes) / n - 0.2) < 0.03
    assert abs(sum(b.uncertain for b in ds.boxes) / n - 0.1) < 0.03


def test_mixture_draws_from_both_components():
    law = Mixture((PointMass(5), PointMass(50)), (0.25, 0.75))
    sizes = object_sizes(generate(SynthSpec(n_images=400, size_law=law, boxes_per_image=(5, 5))))
    assert set(np.round(sizes, 6)) == {5.0, 50.0}
    assert abs(np.mean(sizes == 5.0) - 0.25) < 0.03


def test_invalid_spec():
    with pytest.raises(ValueError):
        SynthSpec(ignore_fraction=1.0)
    with pytest.raises(ValueError):
        SynthSpec(boxes_per_image=(3, 1))


def test_parse_law():
    assert parse_law("lognormal:2.5,0.8") == LogNormal(2.5, 0.8)
    assert parse_law("point:10") == PointMass(10.0)
    assert parse_law("uniform_aspect:0.3,0.9") == UniformAspect(0.3, 0.9)
    with pytest.raises(ValueError):
        parse_law("gamma:1,2")


def test_blank_images(tmp_path):
    ds = generate(SynthSpec(n_images=2, image_dims=(64, 48), size_law=PointMass(8)))
    write_blank_images(ds, tmp_path)
    with Image.open(tmp_path / "000001.png") as im:
        assert im.size == (64, 48) and im.mode == "RGB"
