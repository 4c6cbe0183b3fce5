import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from vgnms import (
    BoundingBox,
    Detection,
    DetectionSet,
    NmsConfig,
    read_native,
    vg_nms,
    write_native,
)
from vgnms.cli import main


@pytest.fixture
def runner():
    return CliRunner()


def small_config(tmp_path, **overrides):
    config = {
        "seed": 101,
        "n_images": 6,
        "image_width": 640,
        "image_height": 480,
        "objects_per_image_mean": 5.0,
        "object_width_range": [60, 160],
        "object_height_range": [50, 120],
        "occlusion_rate": 0.6,
        "class_mix": {"car_van": 0.6, "truck_bus": 0.2, "pedestrian": 0.2},
        "detector": {"seed": 9, "extra_duplicates_mean": 2.0, "fp_rate": 0.2},
    }
    config.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


def run_synth(runner, tmp_path, out_name="corpus", **overrides):
    cfg = small_config(tmp_path, **overrides)
    out = tmp_path / out_name
    result = runner.invoke(main, ["synth", "--config", str(cfg), "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


class TestSynth:
    def test_writes_corpus_detections_and_manifest(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        assert (out / "gt.jsonl").is_file()
        assert (out / "detections.jsonl").is_file()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "synth"
        assert manifest["seeds"]["scene"] == 101
        assert manifest["tool_version"]

    def test_rerun_is_byte_identical(self, runner, tmp_path):
        out1 = run_synth(runner, tmp_path, out_name="c1")
        out2 = run_synth(runner, tmp_path, out_name="c2")
        assert (out1 / "gt.jsonl").read_bytes() == (out2 / "gt.jsonl").read_bytes()
        assert (out1 / "detections.jsonl").read_bytes() == \
            (out2 / "detections.jsonl").read_bytes()

    def test_invalid_occlusion_exits_2_and_names_parameter(self, runner, tmp_path):
        cfg = small_config(tmp_path, occlusion_rate=1.5)
        result = runner.invoke(main, ["synth", "--config", str(cfg),
                                      "--out", str(tmp_path / "x")])
        assert result.exit_code == 2
        assert "occlusion_rate" in result.output

    def test_seed_override(self, runner, tmp_path):
        out_a = run_synth(runner, tmp_path, out_name="a")
        cfg = small_config(tmp_path)
        out_b = tmp_path / "b"
        result = runner.invoke(main, ["synth", "--config", str(cfg), "--out", str(out_b),
                                      "--seed", "999"])
        assert result.exit_code == 0
        assert (out_a / "gt.jsonl").read_bytes() != (out_b / "gt.jsonl").read_bytes()

    def test_provenance_embedded_in_header(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        header = json.loads((out / "gt.jsonl").read_text().splitlines()[0])
        assert "generator" in header
        assert header["generator"]["seed"] == 101


class TestNms:
    def test_vg_matches_library(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        suppressed = tmp_path / "vg.jsonl"
        result = runner.invoke(main, ["nms", "--detections", str(out / "detections.jsonl"),
                                      "--variant", "vg", "--iou", "0.45",
                                      "--out", str(suppressed)])
        assert result.exit_code == 0, result.output
        joints, _ = read_native(out / "detections.jsonl")
        expected = 0
        for dets in joints.by_image().values():
            if dets:
                expected += len(vg_nms(dets, NmsConfig(0.45)).kept_indices)
        written, _ = read_native(suppressed)
        assert len(written) == expected
        assert f"kept {expected}" in result.output
        assert (tmp_path / "vg.jsonl.manifest.json").is_file()

    def test_standard_on_amodal_keeps_no_more_than_vg(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        std_out = tmp_path / "std.jsonl"
        vg_out = tmp_path / "vg.jsonl"
        for variant, path in (("standard", std_out), ("vg", vg_out)):
            result = runner.invoke(main, ["nms",
                                          "--detections", str(out / "detections.jsonl"),
                                          "--variant", variant, "--out", str(path)])
            assert result.exit_code == 0, result.output
        std_set, _ = read_native(std_out)
        vg_set, _ = read_native(vg_out)
        assert len(std_set) <= len(vg_set)

    def test_vg_on_single_kind_input_fails_with_explanation(self, runner, tmp_path):
        dets = [Detection(BoundingBox(0, 0, 30, 30), "car_van", 0.9, "im0")]
        from vgnms import ClassTable, ImageInfo
        dataset = DetectionSet(ClassTable.canonical(),
                               [ImageInfo("im0", 100.0, 100.0)], dets,
                               box_kind="amodal")
        path = tmp_path / "single.jsonl"
        write_native(dataset, path)
        result = runner.invoke(main, ["nms", "--detections", str(path),
                                      "--variant", "vg", "--out", str(tmp_path / "o.jsonl")])
        assert result.exit_code == 2
        assert "joint" in result.output

    def test_unknown_variant_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["nms", "--detections", "x", "--variant", "fancy",
                                      "--out", "y"])
        assert result.exit_code == 2


class TestEval:
    def test_gt_as_detections_scores_100(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        gt, _ = read_native(out / "gt.jsonl")
        perfect = DetectionSet(
            gt.class_table, list(gt.images),
            [Detection(o.box_amodal, o.label, 1.0, o.image_id) for o in gt.objects],
            box_kind="amodal")
        det_path = tmp_path / "perfect.jsonl"
        write_native(perfect, det_path)
        report_dir = tmp_path / "report"
        result = runner.invoke(main, ["eval", "--gt", str(out / "gt.jsonl"),
                                      "--detections", str(det_path),
                                      "--out", str(report_dir)])
        assert result.exit_code == 0, result.output
        payload = json.loads((report_dir / "report.json").read_text())
        assert payload["map_percent"] == 100.0
        assert (report_dir / "report.txt").is_file()
        assert (report_dir / "manifest.json").is_file()
        assert "mAP" in result.output

    def test_rerun_byte_identical(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        args = ["eval", "--gt", str(out / "gt.jsonl"),
                "--detections", str(out / "detections.jsonl")]
        r1 = runner.invoke(main, args + ["--out", str(tmp_path / "r1")])
        r2 = runner.invoke(main, args + ["--out", str(tmp_path / "r2")])
        assert r1.exit_code == 0 and r2.exit_code == 0
        assert (tmp_path / "r1/report.json").read_bytes() == \
            (tmp_path / "r2/report.json").read_bytes()

    def test_joint_detections_evaluated_on_selected_kind(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        result = runner.invoke(main, ["eval", "--gt", str(out / "gt.jsonl"),
                                      "--detections", str(out / "detections.jsonl"),
                                      "--box-kind", "pixel",
                                      "--out", str(tmp_path / "rp")])
        assert result.exit_code == 0, result.output

    def test_empty_detections_score_zero(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        gt, _ = read_native(out / "gt.jsonl")
        empty = DetectionSet(gt.class_table, list(gt.images), [], box_kind="amodal")
        det_path = tmp_path / "empty.jsonl"
        write_native(empty, det_path)
        report_dir = tmp_path / "empty_report"
        result = runner.invoke(main, ["eval", "--gt", str(out / "gt.jsonl"),
                                      "--detections", str(det_path),
                                      "--out", str(report_dir)])
        assert result.exit_code == 0, result.output
        payload = json.loads((report_dir / "report.json").read_text())
        assert payload["map_percent"] == 0.0

    def test_vg_beats_standard_through_cli(self, runner, tmp_path):
        out = run_synth(runner, tmp_path, n_images=12)
        maps = {}
        for variant in ("vg", "standard"):
            suppressed = tmp_path / f"{variant}.jsonl"
            r = runner.invoke(main, ["nms", "--detections", str(out / "detections.jsonl"),
                                     "--variant", variant, "--out", str(suppressed)])
            assert r.exit_code == 0, r.output
            rdir = tmp_path / f"report_{variant}"
            r = runner.invoke(main, ["eval", "--gt", str(out / "gt.jsonl"),
                                     "--detections", str(suppressed),
                                     "--out", str(rdir)])
            assert r.exit_code == 0, r.output
            maps[variant] = json.loads((rdir / "report.json").read_text())["map_percent"]
        assert maps["vg"] >= maps["standard"]


class TestAnalyze:
    def test_outputs_and_identity(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        adir = tmp_path / "analysis"
        result = runner.invoke(main, ["analyze", "--gt", str(out / "gt.jsonl"),
                                      "--out", str(adir)])
        assert result.exit_code == 0, result.output
        bounds = json.loads((adir / "bounds.json").read_text())
        assert (adir / "hist_vehicles_amodal.csv").is_file()
        assert (adir / "hist_vehicles_pixel.csv").is_file()
        assert (adir / "hist_vehicles.svg").is_file()
        for group, payload in bounds["groups"].items():
            assert payload["r_vg"] >= payload["r_max"]
            assert payload["empirical_gt_nms_recall_amodal"] >= payload["r_max"] - 1e-12

    def test_single_object_corpus_full_recall(self, runner, tmp_path):
        out = run_synth(runner, tmp_path, objects_per_image_mean=1.0,
                        occlusion_rate=0.0, n_images=8)
        adir = tmp_path / "analysis1"
        result = runner.invoke(main, ["analyze", "--gt", str(out / "gt.jsonl"),
                                      "--out", str(adir)])
        assert result.exit_code == 0, result.output
        bounds = json.loads((adir / "bounds.json").read_text())
        for payload in bounds["groups"].values():
            assert payload["r_max"] == pytest.approx(1.0)
            assert payload["r_vg"] == pytest.approx(1.0)

    def test_missing_pixel_boxes_fail(self, runner, tmp_path):
        # ground truth written without pixel boxes cannot be analyzed
        from vgnms import ClassTable, GroundTruthObject, GroundTruthSet, ImageInfo
        objs = [GroundTruthObject(BoundingBox(0, 0, 50, 50), "car_van", "im0", "0")]
        gt = GroundTruthSet(ClassTable.canonical(), [ImageInfo("im0", 100.0, 100.0)], objs)
        path = tmp_path / "partial.jsonl"
        write_native(gt, path)
        result = runner.invoke(main, ["analyze", "--gt", str(path),
                                      "--out", str(tmp_path / "a")])
        assert result.exit_code == 1
        assert "pixel" in result.output.lower()


class TestBenchCmd:
    def test_bench_writes_reports(self, runner, tmp_path):
        out = run_synth(runner, tmp_path, n_images=3, objects_per_image_mean=3.0)
        bdir = tmp_path / "bench"
        result = runner.invoke(main, ["bench", "--workload", str(out / "detections.jsonl"),
                                      "--variants", "standard,vg",
                                      "--out", str(bdir)])
        assert result.exit_code == 0, result.output
        payload = json.loads((bdir / "bench.json").read_text())
        assert set(payload["variants"]) == {"standard", "vg"}
        assert payload["outputs_verified"] is True
        assert (bdir / "bench.txt").is_file()

    def test_too_few_reps_is_usage_error(self, runner, tmp_path):
        out = run_synth(runner, tmp_path, n_images=2, objects_per_image_mean=2.0)
        result = runner.invoke(main, ["bench", "--workload", str(out / "detections.jsonl"),
                                      "--reps", "3", "--out", str(tmp_path / "b")])
        assert result.exit_code == 2


class TestValidate:
    def test_clean_file_exit_zero(self, runner, tmp_path):
        out = run_synth(runner, tmp_path)
        result = runner.invoke(main, ["validate", "--input", str(out / "gt.jsonl")])
        assert result.exit_code == 0, result.output
        assert "0 errors" in result.output

    def test_bad_box_reported_and_exit_one(self, runner, tmp_path):
        path = tmp_path / "bad.jsonl"
        header = {"schema_version": "1", "classes": ["car_van"],
                  "images": [{"id": "im0", "width": 100, "height": 100}]}
        bad = {"image_id": "im0", "object_id": "0", "class": "car_van",
               "box_pix": [10, 0, 5, 10], "box_amodal": [0, 0, 10, 10]}
        path.write_text(json.dumps(header) + "\n" + json.dumps(bad) + "\n")
        result = runner.invoke(main, ["validate", "--input", str(path)])
        assert result.exit_code == 1
        assert "invalid box" in result.output

    def test_score_violation_listed(self, runner, tmp_path):
        path = tmp_path / "score.jsonl"
        header = {"schema_version": "1", "classes": ["car_van"],
                  "images": [{"id": "im0", "width": 100, "height": 100}]}
        rec = {"image_id": "im0", "class": "car_van", "score": 1.2,
               "box_amodal": [0, 0, 30, 30]}
        path.write_text(json.dumps(header) + "\n" + json.dumps(rec) + "\n")
        result = runner.invoke(main, ["validate", "--input", str(path)])
        assert result.exit_code == 1
        assert "score" in result.output


class TestExitCodes:
    def test_missing_input_file_is_usage_error(self, runner, tmp_path):
        result = runner.invoke(main, ["eval", "--gt", str(tmp_path / "nope.jsonl"),
                                      "--detections", str(tmp_path / "nope.jsonl"),
                                      "--out", str(tmp_path / "r")])
        assert result.exit_code == 2

    def test_malformed_input_is_runtime_error(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text("{not json}\n")
        result = runner.invoke(main, ["validate", "--input", str(bad)])
        assert result.exit_code == 1

    def test_help_exits_zero(self, runner):
        result = runner.invoke(main, ["--help"])
        assert result.exit_code == 0
        for name in ("synth", "nms", "eval", "analyze", "bench", "validate"):
            assert name in result.output
