import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from PIL import Image

from scalematch.dataset import BoxRecord, DatasetAnnotations, ImageRecord
from scalematch.errors import EmptySource, MissingImageFile, PlanCoverageError
from scalematch.sizes import (
    RectifiedHistogram,
    absolute_size,
    aspect_ratio,
    empirical_cdf,
    rectified_histogram,
    relative_size,
)
from scalematch.synth import LogNormal, SynthSpec, generate
from scalematch.transform import (
    MonotoneMap,
    PlanEntry,
    ScalePlan,
    apply_scale_plan,
    build_monotone_map,
    build_monotone_plan,
    build_scale_plan,
    round_half_up,
    sample_target_size,
)
from conftest import make_dataset


def _hist(probs, edges, closed_last=True):
    probs = np.asarray(probs, dtype=float)
    edges = np.asarray(edges, dtype=float)
    return RectifiedHistogram(probs, edges[:-1], edges[1:], n=1, closed_right=(len(probs) - 1,) if closed_last else ())


def test_point_mass_target():
    h = RectifiedHistogram(np.array([1.0]), np.array([5.0]), np.array([5.0]), n=1)
    rng = np.random.default_rng(0)
    assert all(sample_target_size(h, rng) == 5.0 for _ in range(50))


def test_two_bin_sampling_frequency():
    h = _hist([0.5, 0.5], [0, 10, 20])
    draws = sample_target_size(h, np.random.default_rng(1), size=100_000)
    assert np.all((draws >= 0) & (draws <= 20))
    assert abs(np.mean(draws < 10) - 0.5) <= 0.01


def test_sampling_is_reproducible_and_vectorised_consistently():
    h = _hist([0.2, 0.3, 0.5], [1, 2, 4, 8])
    a = sample_target_size(h, np.random.default_rng(9), size=20)
    rng = np.random.default_rng(9)
    b = [sample_target_size(h, rng) for _ in range(20)]
    assert np.array_equal(a, b)


def test_sampled_sizes_follow_histogram_density():
    h = _hist([0.1, 0.6, 0.3], [0, 1, 3, 4])
    draws = sample_target_size(h, np.random.default_rng(2), size=200_000)
    frac = np.histogram(draws, bins=[0, 1, 3, 4])[0] / draws.size
    assert np.allclose(frac, [0.1, 0.6, 0.3], atol=0.005)
    inside = draws[(draws >= 1) & (draws < 3)]
    assert abs(np.mean(inside < 2) - 0.5) < 0.01


def test_plan_ratio_from_mean_size():
    ds = make_dataset([[80, 120], []])
    target = RectifiedHistogram(np.array([1.0]), np.array([20.0]), np.array([20.0]), n=1)
    plan = build_scale_plan(ds, target, seed=7)
    first, empty = plan.entries
    assert first.mean_size == 100 and first.target_size == 20
    assert first.ratio == pytest.approx(0.2, abs=1e-12)
    assert (empty.mean_size, empty.target_size, empty.ratio, empty.has_objects) == (0.0, 0.0, 1.0, False)
    assert plan.n_passthrough == 1


def test_plan_is_seeded():
    ds = generate(SynthSpec(n_images=30, seed=1))
    h = rectified_histogram(generate(SynthSpec(n_images=50, seed=2)), k=10)
    assert build_scale_plan(ds, h, seed=3).to_dict() == build_scale_plan(ds, h, seed=3).to_dict()
    assert build_scale_plan(ds, h, seed=3).to_dict() != build_scale_plan(ds, h, seed=4).to_dict()


def test_clamp_is_applied_and_counted(caplog):
    ds = make_dataset([[1], [10]])
    target = RectifiedHistogram(np.array([1.0]), np.array([200.0]), np.array([200.0]), n=1)
    plan = build_scale_plan(ds, target, clamp=(1 / 32, 32))
    assert [e.ratio for e in plan.entries] == [32.0, 20.0]
    assert [e.clamped for e in plan.entries] == [True, False]
    assert plan.n_clamped == 1
    assert "clamped" in caplog.text


def test_empty_source():
    with pytest.raises(EmptySource):
        build_scale_plan(make_dataset([[], []]), _hist([1.0], [1, 2]))


def test_plan_round_trip():
    ds = make_dataset([[4, 9], [], [30]])
    plan = build_scale_plan(ds, _hist([0.5, 0.5], [2, 10, 20]), seed=5)
    assert ScalePlan.from_dict(plan.to_dict()).to_dict() == plan.to_dict()


# --- monotone map


def test_uniform_to_uniform_map_is_linear():
    source = np.linspace(0, 100, 1001)
    target = _hist(np.full(10, 0.1), np.linspace(0, 20, 11))
    f = build_monotone_map(source, target)
    assert f(50.0) == pytest.approx(10.0, abs=1e-6)
    grid = np.linspace(0.5, 99.5, 97)
    assert np.max(np.abs(f(grid) - grid / 5)) < 1e-6
    assert f(0.0) == 0.0 and f(100.0) == 20.0


def test_identity_when_distributions_agree():
    sizes = np.random.default_rng(4).lognormal(3, 0.5, 50_000)
    f = build_monotone_map(sizes, rectified_histogram(sizes))
    probe = np.quantile(sizes, np.linspace(0.05, 0.95, 19))
    assert np.max(np.abs(f(probe) / probe - 1)) < 0.02


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(1, 300, allow_nan=False), min_size=20, max_size=200, unique=True),
    st.lists(st.floats(1, 300, allow_nan=False), min_size=2, max_size=100),
)
def test_monotone_map_preserves_order(source, probes):
    f = build_monotone_map(source, rectified_histogram(source, k=5))
    probes = np.sort(probes)
    assert np.all(np.diff(f(probes)) >= 0)


def test_monotone_plan_examples():
    ds = make_dataset([[100], [50, 150], [20]])
    identity = MonotoneMap(empirical_cdf([1, 1000]), empirical_cdf([1, 1000]))
    assert [e.ratio for e in build_monotone_plan(ds, identity).entries] == pytest.approx([1, 1, 1])
    fifth = MonotoneMap(empirical_cdf([0, 1000]), empirical_cdf([0, 200]))
    plan = build_monotone_plan(ds, fifth)
    assert plan.entries[0].ratio == pytest.approx(0.2)
    assert plan.seed is None and plan.mode == "monotone"
    targets = [e.target_size for e in sorted(plan.entries, key=lambda e: e.mean_size)]
    assert targets == sorted(targets)


# --- applying plans


def _plan(ratios, mode="scale_match"):
    return ScalePlan(
        tuple(PlanEntry(i, 1.0, r, r, False) for i, r in ratios.items()), mode, 0, (1 / 32, 32)
    )


def test_apply_scales_boxes_and_dims():
    ds = DatasetAnnotations((ImageRecord(1, 500, 400, "a.png"),), (BoxRecord(1, 1, 10, 10, 30, 40),))
    out = apply_scale_plan(ds, _plan({1: 0.2}))
    b = out.boxes[0]
    assert (b.x, b.y, b.w, b.h) == pytest.approx((2, 2, 6, 8))
    assert (out.images[0].width, out.images[0].height) == pytest.approx((100, 80))


def test_unit_ratio_is_identity(tiny_dataset):
    plan = _plan({img.image_id: 1.0 for img in tiny_dataset.images})
    assert apply_scale_plan(tiny_dataset, plan) == tiny_dataset


def test_plan_must_cover_every_image(tiny_dataset):
    with pytest.raises(PlanCoverageError):
        apply_scale_plan(tiny_dataset, _plan({1: 1.0}))


def test_pixel_mode_resizes_files(tmp_path):
    src, dst = tmp_path / "in", tmp_path / "out"
    src.mkdir()
    Image.new("RGB", (500, 400), (10, 200, 30)).save(src / "a.png")
    ds = DatasetAnnotations((ImageRecord(1, 500, 400, "a.png"),), (BoxRecord(1, 1, 490, 10, 10, 40),))
    out = apply_scale_plan(ds, _plan({1: 0.2}), src, dst)
    with Image.open(dst / "a.png") as im:
        assert im.size == (100, 80)
        assert np.all(np.asarray(im) == (10, 200, 30))
    assert (out.images[0].width, out.images[0].height) == (100.0, 80.0)
    b = out.boxes[0]
    assert b.x + b.w <= 100 + 1e-9


def test_pixel_mode_rounding_and_minimum(tmp_path):
    src, dst = tmp_path / "in", tmp_path / "out"
    src.mkdir()
    Image.new("L", (5, 3)).save(src / "a.png")
    ds = DatasetAnnotations((ImageRecord(1, 5, 3, "a.png"),), (BoxRecord(1, 1, 0, 0, 1, 1),))
    out = apply_scale_plan(ds, _plan({1: 0.1}), src, dst, interpolation="nearest")
    assert (out.images[0].width, out.images[0].height) == (1.0, 1.0)
    assert round_half_up(2.5) == 3 and round_half_up(0.4) == 0


def test_pixel_mode_missing_file(tmp_path):
    ds = make_dataset([[10]])
    with pytest.raises(MissingImageFile):
        apply_scale_plan(ds, _plan({1: 0.5}), tmp_path, tmp_path / "o")


def test_per_image_mean_hits_target_and_shape_is_preserved():
    ds = generate(SynthSpec(n_images=40, size_law=LogNormal(math.log(60), 0.7), seed=3, uncertain_fraction=0.2))
    target = rectified_histogram(generate(SynthSpec(n_images=200, seed=4)), k=20)
    plan = build_scale_plan(ds, target, seed=0)
    out = apply_scale_plan(ds, plan)
    for entry in plan.entries:
        if not entry.has_objects or entry.clamped:
            continue
        sizes = [absolute_size(b) for b in out.boxes_by_image[entry.image_id] if b.is_target()]
        assert np.mean(sizes) == pytest.approx(entry.target_size, abs=1e-6)
    for before, after in zip(ds.boxes, out.boxes):
        assert aspect_ratio(after) == pytest.approx(aspect_ratio(before), abs=1e-9)
        rs0 = relative_size(before, ds.image_by_id[before.image_id])
        rs1 = relative_size(after, out.image_by_id[after.image_id])
        assert rs1 == pytest.approx(rs0, abs=1e-9)
