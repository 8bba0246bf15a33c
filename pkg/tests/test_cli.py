import json

import pytest

from scalematch.cli import main
from scalematch.dataset import Detection, DetectionSet, load_annotations, load_detections, save_detections


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def synth_pair(tmp_path, capsys):
    src, tgt = tmp_path / "src.json", tmp_path / "tgt.json"
    assert run(capsys, "synth", "--n-images", 40, "--size-law", "lognormal:4.09,0.7", "--seed", 1, "--out", src)[0] == 0
    assert run(capsys, "synth", "--n-images", 60, "--seed", 2, "--uncertain-fraction", 0.1, "--out", tgt)[0] == 0
    return src, tgt


def test_unknown_subcommand(capsys):
    code, _, err = run(capsys, "frobnicate")
    assert code == 2 and "usage" in err


def test_missing_required_option(capsys):
    code, _, err = run(capsys, "stats")
    assert code == 2 and "--in" in err


def test_version(capsys):
    code, out, _ = run(capsys, "--version")
    assert code == 0 and "scalematch.annotations/1" in out


def test_stats_layout(capsys, synth_pair):
    code, out, _ = run(capsys, "stats", "--in", synth_pair[1])
    header, row = out.strip().splitlines()
    assert code == 0
    assert "absolute size" in header and "relative size" in header and "aspect ratio" in header
    assert row.count("±") == 3


def test_module_error_is_structured(capsys, tmp_path):
    code, _, err = run(capsys, "stats", "--in", tmp_path / "absent.json")
    payload = json.loads(err.strip().splitlines()[-1])
    assert code == 1
    assert payload["operation"] == "dataset.load_annotations"
    assert payload["error"] and payload["message"]


def test_hist_csv_and_sparse_rates(capsys, synth_pair, tmp_path):
    out_csv = tmp_path / "h.csv"
    code, out, _ = run(capsys, "hist", "--in", synth_pair[1], "--k", 20, "--out", out_csv)
    lines = out_csv.read_text().splitlines()
    assert code == 0 and lines[0] == "bin_low,bin_high,probability" and len(lines) == 21
    assert sum(float(r.split(",")[2]) for r in lines[1:]) == pytest.approx(1.0)
    assert "persons only" in out and "with uncertain" in out
    assert (tmp_path / "h.config.json").exists()


@pytest.mark.parametrize("command", ["match", "msm"])
def test_match_outputs_and_reproducibility(capsys, synth_pair, tmp_path, command):
    src, tgt = synth_pair
    outs = []
    for name in ("a", "b"):
        d = tmp_path / f"{command}_{name}"
        code, _, _ = run(
            capsys, command, "--source", src, "--target", tgt, "--seed", 7, "--annotations-only", "--out-dir", d,
            "--workers", 1,
        ) if command == "match" else run(
            capsys, command, "--source", src, "--target", tgt, "--annotations-only", "--out-dir", d, "--workers", 1
        )
        assert code == 0
        outs.append(d)
    for name in ("annotations.json", "scale_plan.json"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    configs = [json.loads((d / "resolved_config.json").read_text())["options"] for d in outs]
    assert [c.pop("out_dir") for c in configs] == [str(d) for d in outs]
    assert configs[0] == configs[1]
    plan = json.loads((outs[0] / "scale_plan.json").read_text())
    assert plan["mode"] == ("scale_match" if command == "match" else "monotone")
    assert len(load_annotations(outs[0] / "annotations.json").images) == 40


def test_pixel_mode_needs_images(capsys, synth_pair, tmp_path):
    code, _, err = run(capsys, "match", "--source", synth_pair[0], "--target", synth_pair[1], "--out-dir", tmp_path / "o")
    assert code == 1 and "image-dir" in err


def test_config_file_and_override(capsys, synth_pair, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"k": 10, "seed": 3}))
    d = tmp_path / "o"
    args = ("match", "--config", cfg, "--source", synth_pair[0], "--target", synth_pair[1], "--annotations-only")
    assert run(capsys, *args, "--seed", 4, "--out-dir", d)[0] == 0
    echoed = json.loads((d / "resolved_config.json").read_text())["options"]
    assert echoed["k"] == 10 and echoed["seed"] == 4
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(capsys, *args, "--out-dir", d)[0] == 2


def test_tile_merge_eval_pipeline(capsys, tmp_path):
    gt = tmp_path / "gt.json"
    run(capsys, "synth", "--n-images", 4, "--size-law", "uniform:4,40", "--width", 1920, "--height", 1080,
        "--images-dir", tmp_path / "img", "--seed", 9, "--out", gt)
    tiles = tmp_path / "tiles"
    code, out, _ = run(capsys, "tile", "--in", gt, "--image-dir", tmp_path / "img", "--fill", "mean", "--out-dir", tiles)
    assert code == 0 and "tiles" in out
    tiled = load_annotations(tiles / "annotations.json")
    assert len(tiled.images) == 24 and (tiles / "images").is_dir()
    dets = DetectionSet(tuple(Detection(b.image_id, b.x, b.y, b.w, b.h, 1.0) for b in tiled.target_boxes()))
    save_detections(dets, tmp_path / "tile_dets.json")
    merged = tmp_path / "merged.json"
    code, _, _ = run(capsys, "merge", "--dets", tmp_path / "tile_dets.json", "--provenance", tiles / "provenance.json", "--out", merged)
    assert code == 0
    assert len(load_detections(merged)) == len(load_annotations(gt).target_boxes())
    report = tmp_path / "report.json"
    code, out, _ = run(capsys, "eval", "--gt", gt, "--dets", merged, "--out", report, "--pr-csv-dir", tmp_path / "pr")
    assert code == 0 and "AP@50" in out
    cells = json.loads(report.read_text())["cells"]
    assert all(c["ap"] == 1.0 for c in cells if c["n_gt"])
    assert (tmp_path / "pr" / "pr_all_iou50.csv").exists()


def test_cluster_anchors(capsys, synth_pair, tmp_path):
    code, out, _ = run(capsys, "cluster-anchors", "--in", synth_pair[1], "--k", 5, "--json", tmp_path / "a.json")
    assert code == 0 and "anchor sizes" in out
    assert len(json.loads((tmp_path / "a.json").read_text())["sizes"]) == 5
