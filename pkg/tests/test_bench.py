import pytest

from vgnms import (
    BoundingBox,
    ClassTable,
    Detection,
    DetectionSet,
    ImageInfo,
    JointDetection,
    JointDetectionSet,
    high_overlap_stats,
    run_bench,
)
from vgnms.errors import ConfigError


def joint(x0, score, image_id="im0", label="car_van"):
    pix = BoundingBox(x0, 0, x0 + 10, 10)
    amodal = BoundingBox(x0 - 2, 0, x0 + 12, 10)
    return JointDetection(pix, amodal, label, score, image_id)


def joint_workload(n_per_image=6, n_images=3):
    dets = []
    for i in range(n_images):
        for k in range(n_per_image):
            dets.append(joint(5.0 * k, 0.9 - 0.05 * k, image_id=f"im{i}"))
    images = [ImageInfo(f"im{i}", 200.0, 100.0) for i in range(n_images)]
    return JointDetectionSet(ClassTable.canonical(), images, dets)


def single_workload():
    dets = [Detection(BoundingBox(0, 0, 10, 10), "car_van", 0.9, "im0"),
            Detection(BoundingBox(1, 0, 11, 10), "car_van", 0.8, "im0")]
    return DetectionSet(ClassTable.canonical(), [ImageInfo("im0", 100.0, 100.0)],
                        dets, box_kind="amodal")


class TestRunBench:
    def test_all_variants_on_joint_workload(self):
        report = run_bench(joint_workload(), ("standard", "soft", "vg", "vg-soft"))
        assert set(report.variants) == {"standard", "soft", "vg", "vg-soft"}
        assert report.outputs_verified is True
        for v in report.variants.values():
            assert v.median_s > 0.0
            assert v.repetitions == 30
        assert report.variants["standard"].relative_to_standard == pytest.approx(1.0)

    def test_single_box_workload(self):
        report = run_bench(single_workload(), ("standard", "soft"))
        assert report.n_boxes == 2
        assert report.workload_kind == "amodal"

    def test_vg_requires_joints(self):
        with pytest.raises(ConfigError, match="joint"):
            run_bench(single_workload(), ("vg",))

    def test_minimum_repetitions_enforced(self):
        with pytest.raises(ConfigError, match="repetitions"):
            run_bench(joint_workload(), ("standard",), repetitions=5)
        with pytest.raises(ConfigError, match="warmup"):
            run_bench(joint_workload(), ("standard",), warmup=1)

    def test_unknown_variant_rejected(self):
        with pytest.raises(ConfigError, match="variant"):
            run_bench(joint_workload(), ("fancy",))

    def test_empty_workload_rejected(self):
        empty = DetectionSet(ClassTable.canonical(), [], [], box_kind="amodal")
        with pytest.raises(ConfigError, match="nonempty"):
            run_bench(empty, ("standard",))

    def test_report_serializes(self):
        report = run_bench(joint_workload(), ("standard", "vg"))
        payload = report.to_json_dict()
        assert payload["workload"]["n_boxes"] == report.n_boxes
        assert "standard" in payload["variants"]
        text = report.to_text()
        assert "median" in text and "standard" in text


class TestOverlapStats:
    def test_exhaustive_pair_count_small_case(self):
        # three boxes in one image: a-b IoU = 9/11 > 0.45, b-c = 9/11,
        # a-c = 8/12 = 2/3 > 0.45 -> 3 pairs, 3 boxes involved
        boxes = [BoundingBox(0, 0, 10, 10), BoundingBox(1, 0, 11, 10),
                 BoundingBox(2, 0, 12, 10)]
        dets = [Detection(b, "car_van", 0.5, "im0") for b in boxes]
        workload = DetectionSet(ClassTable.canonical(),
                                [ImageInfo("im0", 100.0, 100.0)], dets,
                                box_kind="amodal")
        stats = high_overlap_stats(workload, 0.45)
        assert stats["amodal"]["high_overlap_pairs"] == 3
        assert stats["amodal"]["boxes_with_high_overlap"] == 3

    def test_classes_isolated(self):
        boxes = [BoundingBox(0, 0, 10, 10), BoundingBox(1, 0, 11, 10)]
        dets = [Detection(boxes[0], "car_van", 0.5, "im0"),
                Detection(boxes[1], "pedestrian", 0.5, "im0")]
        workload = DetectionSet(ClassTable.canonical(),
                                [ImageInfo("im0", 100.0, 100.0)], dets,
                                box_kind="amodal")
        stats = high_overlap_stats(workload, 0.45)
        assert stats["amodal"]["high_overlap_pairs"] == 0

    def test_joint_workload_reports_both_kinds_and_ratio(self):
        stats = high_overlap_stats(joint_workload(), 0.45)
        assert "pixel" in stats and "amodal" in stats
        assert stats["amodal"]["high_overlap_pairs"] >= stats["pixel"]["high_overlap_pairs"]
        if stats["pixel"]["boxes_with_high_overlap"]:
            assert stats["amodal_to_pixel_ratio"] >= 1.0
