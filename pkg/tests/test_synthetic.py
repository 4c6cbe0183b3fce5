import numpy as np
import pytest

from vgnms import (
    BoundingBox,
    DetectorNoiseConfig,
    SceneConfig,
    generate_corpus,
    load_generator_spec,
    max_iou_histogram,
    simulate_detector,
    tail_mass,
    visible_region_bbox,
    write_native,
)
from vgnms.errors import ConfigError
from vgnms.geometry import area

from _reference import visible_bbox_raster


class TestVisibleRegion:
    def test_no_occluders(self):
        rect = BoundingBox(0, 0, 10, 10)
        assert visible_region_bbox(rect, []) == rect

    def test_two_rectangle_hand_case(self):
        back = BoundingBox(5, 0, 15, 10)
        front = BoundingBox(0, 0, 10, 10)
        assert visible_region_bbox(back, [front]) == BoundingBox(10, 0, 15, 10)

    def test_fully_covered_returns_none(self):
        back = BoundingBox(2, 2, 8, 8)
        front = BoundingBox(0, 0, 10, 10)
        assert visible_region_bbox(back, [front]) is None

    def test_hole_in_middle_keeps_full_bbox(self):
        back = BoundingBox(0, 0, 10, 10)
        front = BoundingBox(4, 4, 6, 6)
        assert visible_region_bbox(back, [front]) == back

    def test_corner_notch(self):
        back = BoundingBox(0, 0, 10, 10)
        front = BoundingBox(5, 5, 15, 15)
        # visible region is an L shape covering the full extent
        assert visible_region_bbox(back, [front]) == back

    def test_band_across_leaves_two_parts(self):
        back = BoundingBox(0, 0, 10, 10)
        front = BoundingBox(0, 4, 10, 6)
        assert visible_region_bbox(back, [front]) == back

    def test_matches_raster_oracle_on_grid_aligned_scenes(self):
        rng = np.random.default_rng(42)
        cell = 0.25
        for _ in range(150):
            def grid_box(max_span=16.0):
                x0 = round(float(rng.uniform(0, max_span)) / cell) * cell
                y0 = round(float(rng.uniform(0, max_span)) / cell) * cell
                w = max(cell, round(float(rng.uniform(1, 10)) / cell) * cell)
                h = max(cell, round(float(rng.uniform(1, 10)) / cell) * cell)
                return BoundingBox(x0, y0, x0 + w, y0 + h)

            rect = grid_box()
            occluders = [grid_box() for _ in range(int(rng.integers(0, 4)))]
            got = visible_region_bbox(rect, occluders)
            want = visible_bbox_raster(rect.as_tuple(),
                                       [o.as_tuple() for o in occluders], cell)
            if want is None:
                assert got is None
            else:
                assert got is not None
                assert got.as_tuple() == pytest.approx(want, abs=1e-9)


class TestSceneConfig:
    def test_occlusion_rate_validated_by_name(self):
        with pytest.raises(ConfigError, match="occlusion_rate"):
            SceneConfig(seed=1, occlusion_rate=1.5)

    def test_size_range_validated(self):
        with pytest.raises(ConfigError, match="object_width_range"):
            SceneConfig(seed=1, object_width_range=(50.0, 10.0))

    def test_oversized_objects_rejected(self):
        with pytest.raises(ConfigError):
            SceneConfig(seed=1, image_width=100.0, object_width_range=(50.0, 200.0))

    def test_class_mix_needed(self):
        with pytest.raises(ConfigError):
            SceneConfig(seed=1, class_mix={})


class TestGenerateCorpus:
    def test_deterministic_given_seed(self, tmp_path):
        cfg = SceneConfig(seed=11)
        a = generate_corpus(cfg, 8)
        b = generate_corpus(cfg, 8)
        assert a.objects == b.objects
        pa, pb = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        write_native(a, pa)
        write_native(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_threads_do_not_change_output(self):
        cfg = SceneConfig(seed=12)
        assert generate_corpus(cfg, 6, threads=1).objects == \
            generate_corpus(cfg, 6, threads=4).objects

    def test_different_seeds_differ(self):
        a = generate_corpus(SceneConfig(seed=1), 4)
        b = generate_corpus(SceneConfig(seed=2), 4)
        assert a.objects != b.objects

    def test_zero_occlusion_means_equal_boxes(self):
        cfg = SceneConfig(seed=13, occlusion_rate=0.0, objects_per_image_mean=5.0)
        gt = generate_corpus(cfg, 10)
        assert len(gt.objects) > 0
        for o in gt.objects:
            assert o.box_pix == o.box_amodal

    def test_pixel_always_inside_amodal(self):
        cfg = SceneConfig(seed=14, occlusion_rate=0.7)
        gt = generate_corpus(cfg, 15)
        for o in gt.objects:
            assert o.box_pix is not None
            assert o.box_amodal.x_min <= o.box_pix.x_min
            assert o.box_amodal.y_min <= o.box_pix.y_min
            assert o.box_pix.x_max <= o.box_amodal.x_max
            assert o.box_pix.y_max <= o.box_amodal.y_max

    def test_every_object_has_visible_area(self):
        cfg = SceneConfig(seed=15, occlusion_rate=0.8)
        gt = generate_corpus(cfg, 12)
        assert all(o.box_pix is not None for o in gt.objects)

    def test_amodal_tail_dominates_pixel_tail_on_crowded_config(self):
        cfg = SceneConfig(seed=16, occlusion_rate=0.7, objects_per_image_mean=7.0)
        gt = generate_corpus(cfg, 30)
        h_a = max_iou_histogram(gt, "amodal", "vehicles")
        h_p = max_iou_histogram(gt, "pixel", "vehicles")
        for t in np.arange(0.05, 0.96, 0.05):
            assert tail_mass(h_a, float(t)) >= tail_mass(h_p, float(t)) - 1e-12


class TestSimulateDetector:
    def test_noise_free_single_detection_per_object(self):
        cfg = SceneConfig(seed=20, occlusion_rate=0.5)
        gt = generate_corpus(cfg, 6)
        noise = DetectorNoiseConfig(jitter_px=0.0, extra_duplicates_mean=0.0,
                                    miss_rate=0.0, fp_rate=0.0, score_noise=0.0)
        dets = simulate_detector(gt, noise, seed=1)
        assert len(dets) == len(gt.objects)
        by_image = dets.by_image()
        for o, d in zip(gt.objects, [d for im in gt.images for d in by_image[im.id]]):
            assert d.box_amodal == o.box_amodal
            assert d.box_pix == o.box_pix
            # score = base - penalty * occluded_fraction, no noise
            occ = 1.0 - area(o.box_pix) / area(o.box_amodal)
            assert d.score == pytest.approx(0.9 - 0.3 * occ, abs=1e-12)

    def test_duplicates_overlap_heavily(self):
        cfg = SceneConfig(seed=21, occlusion_rate=0.0, objects_per_image_mean=1.0)
        gt = generate_corpus(cfg, 4)
        noise = DetectorNoiseConfig(jitter_px=1.0, extra_duplicates_mean=4.0,
                                    miss_rate=0.0, fp_rate=0.0)
        dets = simulate_detector(gt, noise, seed=2)
        from vgnms import iou
        for image_id, group in dets.by_image().items():
            for a in group:
                for b in group:
                    if a is not b and a.label == b.label:
                        assert iou(a.box_pix, b.box_pix) > 0.5

    def test_deterministic(self):
        cfg = SceneConfig(seed=22)
        gt = generate_corpus(cfg, 5)
        noise = DetectorNoiseConfig()
        a = simulate_detector(gt, noise, seed=3)
        b = simulate_detector(gt, noise, seed=3)
        assert a.detections == b.detections
        c = simulate_detector(gt, noise, seed=4, threads=4)
        d = simulate_detector(gt, noise, seed=4, threads=1)
        assert c.detections == d.detections

    def test_rate_validation(self):
        with pytest.raises(ConfigError, match="miss_rate"):
            DetectorNoiseConfig(miss_rate=1.4)
        with pytest.raises(ConfigError, match="jitter"):
            DetectorNoiseConfig(jitter_px=-1.0)


class TestGeneratorSpec:
    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="bogus"):
            load_generator_spec({"seed": 1, "bogus": 2})

    def test_seed_required(self):
        with pytest.raises(ConfigError, match="seed"):
            load_generator_spec({"n_images": 3})

    def test_detector_section_parsed(self):
        spec = load_generator_spec({
            "seed": 5, "n_images": 3,
            "detector": {"seed": 9, "jitter_px": 1.0},
        })
        assert spec.detector_seed == 9
        assert spec.detector.jitter_px == 1.0
        assert spec.n_images == 3

    def test_detector_seed_defaults_to_scene_seed(self):
        spec = load_generator_spec({"seed": 5, "detector": {}})
        assert spec.detector_seed == 5

    def test_unknown_detector_key_named(self):
        with pytest.raises(ConfigError, match="warp"):
            load_generator_spec({"seed": 1, "detector": {"warp": 3}})
