"""Suppression, evaluation and occlusion analysis for joint pixel-based and
amodal object detections."""

from importlib import resources
import json

__version__ = "0.1.0"

from .errors import ConfigError, DataError, GenerationError, ToolkitError
from .geometry import BoundingBox, area, intersection_area, iou, min_side
from .data import (
    ClassTable,
    Detection,
    DetectionSet,
    GroundTruthObject,
    GroundTruthSet,
    ImageInfo,
    JointDetection,
    JointDetectionSet,
    Violation,
    split_views,
    split_view_lists,
    validate,
)
from .suppression import (
    NmsConfig,
    SoftNmsConfig,
    SuppressionResult,
    soft_nms,
    standard_nms,
    vg_nms,
    vg_soft_nms,
)
from .estimators import (
    SoftNMS,
    StandardNMS,
    VisibilityGuidedNMS,
    VisibilityGuidedSoftNMS,
    check_detections,
    check_joint_detections,
)
from .evaluation import EvalConfig, EvalReport, apply_size_filter, average_precision, evaluate, match_greedy
from .analysis import (
    OverlapHistogram,
    RecallBounds,
    empirical_gt_nms_recall,
    max_iou_histogram,
    recall_bound_standard,
    recall_bound_vg,
    tail_mass,
)
from .corpus_io import (
    merge_pixel_amodal,
    read_kitti_labels,
    read_native,
    write_native,
)
from .synthetic import (
    DetectorNoiseConfig,
    SceneConfig,
    generate_corpus,
    load_generator_spec,
    simulate_detector,
    visible_region_bbox,
)
from .bench import BenchReport, high_overlap_stats, run_bench


def shipped_config(name: str) -> dict:
    """Load one of the generator configs bundled with the package
    (e.g. "high_occlusion", "bench_50k")."""
    path = resources.files(__name__).joinpath(f"configs/{name}.json")
    return json.loads(path.read_text(encoding="utf-8"))
