"""Detection evaluation: size exclusion, greedy matching, AP and mAP.

A detection counts as a true positive when it claims an unmatched ground
truth object of the same class in the same image with IoU at or above the
configured threshold (default 0.5). Boxes smaller than the configured
minimum side (default 20 px) are excluded on the same box kind being
evaluated, ground truth before matching so removed objects never count as
false negatives. Occluded or truncated objects are never down-weighted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import (
    DISPLAY_NAMES,
    Detection,
    DetectionSet,
    GroundTruthObject,
    GroundTruthSet,
    JointDetectionSet,
)
from .errors import ConfigError
from .geometry import iou, min_side
from .parallel import parallel_map

__all__ = [
    "EvalConfig",
    "MatchEntry",
    "MatchResult",
    "ClassReport",
    "EvalReport",
    "apply_size_filter",
    "match_greedy",
    "average_precision",
    "evaluate",
]

BOX_KINDS = ("pixel", "amodal")
AP_MODES = ("all_points", "eleven_point")


@dataclass(frozen=True)
class EvalConfig:
    tp_iou: float = 0.5
    min_box_side: float = 20.0
    box_kind: str = "amodal"
    ap_integration: str = "all_points"
    filter_detections: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.tp_iou < 1.0):
            raise ConfigError(f"tp_iou must lie in (0, 1), got {self.tp_iou}")
        if self.min_box_side < 0.0:
            raise ConfigError(f"min_box_side must be >= 0, got {self.min_box_side}")
        if self.box_kind not in BOX_KINDS:
            raise ConfigError(f"box_kind must be one of {BOX_KINDS}, got {self.box_kind!r}")
        if self.ap_integration not in AP_MODES:
            raise ConfigError(f"ap_integration must be one of {AP_MODES}, got {self.ap_integration!r}")


@dataclass(frozen=True)
class MatchEntry:
    det_index: int
    gt_object_id: str | None
    is_tp: bool


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one (image, class) group of detections."""

    entries: tuple[MatchEntry, ...]
    fn: int


@dataclass
class ClassReport:
    label: str
    ap: float | None  # None when the class has no ground truth
    tp: int
    fp: int
    fn: int
    recall: float
    pr_curve: list[tuple[float, float]] = field(default_factory=list)  # (recall, precision)


@dataclass
class EvalReport:
    per_class: dict[str, ClassReport]
    map_percent: float
    config: EvalConfig
    n_images: int
    n_detections_evaluated: int
    n_gt_evaluated: int
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "config": {
                "tp_iou": self.config.tp_iou,
                "min_box_side": self.config.min_box_side,
                "box_kind": self.config.box_kind,
                "ap_integration": self.config.ap_integration,
                "filter_detections": self.config.filter_detections,
            },
            "n_images": self.n_images,
            "n_detections_evaluated": self.n_detections_evaluated,
            "n_gt_evaluated": self.n_gt_evaluated,
            "map_percent": self.map_percent,
            "per_class": {
                label: {
                    "ap_percent": None if r.ap is None else 100.0 * r.ap,
                    "tp": r.tp,
                    "fp": r.fp,
                    "fn": r.fn,
                    "recall": r.recall,
                    "pr_curve": [[rc, pr] for rc, pr in r.pr_curve],
                }
                for label, r in self.per_class.items()
            },
            "warnings": list(self.warnings),
        }

    def to_text(self) -> str:
        """Aligned table with one AP column per class plus mAP."""
        cfg = self.config
        lines = [
            f"evaluation: box kind = {cfg.box_kind}, tp IoU = {cfg.tp_iou}, "
            f"min box side = {cfg.min_box_side} px "
            f"(size filter on {cfg.box_kind} boxes, "
            f"detections filtered: {'on' if cfg.filter_detections else 'off'}), "
            f"AP integration = {cfg.ap_integration}",
        ]
        labels = list(self.per_class)
        headers = [DISPLAY_NAMES.get(label, label) for label in labels] + ["mAP"]
        values = []
        for label in labels:
            ap = self.per_class[label].ap
            values.append("   n/a" if ap is None else f"{100.0 * ap:6.2f}")
        values.append(f"{self.map_percent:6.2f}")
        widths = [max(len(h), len(v)) for h, v in zip(headers, values)]
        lines.append("  ".join(h.rjust(w) for h, w in zip(headers, widths)))
        lines.append("  ".join(v.rjust(w) for v, w in zip(values, widths)))
        lines.append("")
        lines.append(f"{'class':<14}{'TP':>8}{'FP':>8}{'FN':>8}{'recall':>10}")
        for label in labels:
            r = self.per_class[label]
            lines.append(f"{label:<14}{r.tp:>8}{r.fp:>8}{r.fn:>8}{r.recall:>10.4f}")
        for warning in self.warnings:
            lines.append(f"warning: {warning}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _evaluated_box(obj, box_kind: str):
    if isinstance(obj, GroundTruthObject):
        return obj.box_pix if box_kind == "pixel" else obj.box_amodal
    return obj.box


def apply_size_filter(gt: list[GroundTruthObject], dets: list[Detection],
                      cfg: EvalConfig) -> tuple[list[GroundTruthObject], list[Detection]]:
    """Drop ground truth and (optionally) detections whose evaluated box has
    min side below the configured bound. Removed ground truth never counts
    as a false negative."""
    kept_gt = [o for o in gt
               if _evaluated_box(o, cfg.box_kind) is not None
               and min_side(_evaluated_box(o, cfg.box_kind)) >= cfg.min_box_side]
    if cfg.filter_detections:
        kept_dets = [d for d in dets if min_side(d.box) >= cfg.min_box_side]
    else:
        kept_dets = list(dets)
    return kept_gt, kept_dets


def match_greedy(dets: list[Detection], gt: list[GroundTruthObject],
                 tp_iou: float, box_kind: str = "amodal") -> MatchResult:
    """Greedy matching of one (image, class) group, size filter already applied.

    Detections are processed in descending score order (ties keep input
    order); each claims the still-unmatched ground truth object with the
    highest IoU, provided that IoU reaches ``tp_iou``. Each ground truth
    object is claimed at most once; leftovers are false negatives.
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    gt_boxes = [_evaluated_box(o, box_kind) for o in gt]
    unmatched = set(range(len(gt)))
    entries: list[MatchEntry] = []
    for det_index in order:
        best_iou = 0.0
        best_gt = None
        for gi in sorted(unmatched):
            overlap = iou(dets[det_index].box, gt_boxes[gi])
            if overlap > best_iou:
                best_iou = overlap
                best_gt = gi
        if best_gt is not None and best_iou >= tp_iou:
            unmatched.discard(best_gt)
            entries.append(MatchEntry(det_index, gt[best_gt].object_id, True))
        else:
            entries.append(MatchEntry(det_index, None, False))
    entries.sort(key=lambda e: e.det_index)
    return MatchResult(entries=tuple(entries), fn=len(unmatched))


def average_precision(scored_flags: list[tuple[float, bool]], n_gt: int,
                      mode: str = "all_points") -> tuple[float, list[tuple[float, float]]]:
    """AP from (score, is_tp) pairs against ``n_gt`` positives.

    Returns (ap, pr_curve). ``all_points`` integrates the precision
    envelope over recall; ``eleven_point`` averages the envelope at recalls
    0, 0.1, ..., 1.0. Depends on score ranks only.
    """
    if n_gt <= 0:
        raise ConfigError("average_precision needs a positive ground-truth count")
    if not scored_flags:
        return 0.0, []
    flags = np.array([f for _, f in sorted(scored_flags, key=lambda p: -p[0])], dtype=bool)
    tp_cum = np.cumsum(flags)
    fp_cum = np.cumsum(~flags)
    recall = tp_cum / float(n_gt)
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1)
    curve = list(zip(recall.tolist(), precision.tolist()))

    if mode == "eleven_point":
        ap = 0.0
        for r in np.linspace(0.0, 1.0, 11):
            mask = recall >= r
            ap += float(precision[mask].max()) if mask.any() else 0.0
        return ap / 11.0, curve

    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(len(mpre) - 2, -1, -1):
        mpre[i] = max(mpre[i], mpre[i + 1])
    changed = np.flatnonzero(mrec[1:] != mrec[:-1])
    ap = float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))
    return ap, curve


def _canonical_det_order(d: Detection) -> tuple:
    return (-d.score, d.image_id, d.label, d.box.as_tuple())


def evaluate(gt: GroundTruthSet, dets: DetectionSet | JointDetectionSet,
             cfg: EvalConfig | None = None, threads: int = 1) -> EvalReport:
    """Full pipeline: size filter, per-image per-class matching, AP, mAP.

    Deterministic and independent of input record ordering (detections are
    canonicalized by score, image, label and box before matching). Joint
    detection sets are evaluated on the configured box kind.
    """
    cfg = cfg or EvalConfig()
    if not gt.class_table.same_labels(dets.class_table):
        raise ConfigError(
            f"class tables differ: {sorted(gt.class_table.labels)} vs "
            f"{sorted(dets.class_table.labels)}")

    if isinstance(dets, JointDetectionSet):
        flat = [Detection(d.box_pix if cfg.box_kind == "pixel" else d.box_amodal,
                          d.label, d.score, d.image_id)
                for d in dets.detections]
    else:
        if dets.box_kind is not None and dets.box_kind != cfg.box_kind:
            raise ConfigError(
                f"detections carry {dets.box_kind!r} boxes but the evaluation "
                f"is configured for {cfg.box_kind!r}")
        flat = list(dets.detections)
    flat.sort(key=_canonical_det_order)

    gt_objects = sorted(gt.objects, key=lambda o: (o.image_id, o.object_id))
    filtered_gt, filtered_dets = apply_size_filter(gt_objects, flat, cfg)

    labels = list(gt.class_table.labels)
    image_ids = sorted({im.id for im in gt.images} | {im.id for im in dets.images})
    gt_groups: dict[tuple[str, str], list[GroundTruthObject]] = {}
    for o in filtered_gt:
        gt_groups.setdefault((o.image_id, o.label), []).append(o)
    det_groups: dict[tuple[str, str], list[Detection]] = {}
    for d in filtered_dets:
        det_groups.setdefault((d.image_id, d.label), []).append(d)

    tasks = [(image_id, label) for image_id in image_ids for label in labels
             if (image_id, label) in gt_groups or (image_id, label) in det_groups]

    def run_group(key: tuple[str, str]):
        group_dets = det_groups.get(key, [])
        group_gt = gt_groups.get(key, [])
        result = match_greedy(group_dets, group_gt, cfg.tp_iou, cfg.box_kind)
        flagged = [(group_dets[e.det_index].score, e.is_tp) for e in result.entries]
        return key, flagged, result.fn

    outcomes = parallel_map(run_group, tasks, threads)

    per_label_flags: dict[str, list[tuple[float, bool]]] = {label: [] for label in labels}
    per_label_fn: dict[str, int] = {label: 0 for label in labels}
    for (image_id, label), flagged, fn in outcomes:
        per_label_flags[label].extend(flagged)
        per_label_fn[label] += fn

    gt_counts = {label: sum(1 for o in filtered_gt if o.label == label) for label in labels}

    per_class: dict[str, ClassReport] = {}
    warnings: list[str] = []
    aps: list[float] = []
    for label in labels:
        flags = per_label_flags[label]
        tp = sum(1 for _, f in flags if f)
        fp = sum(1 for _, f in flags if not f)
        fn = per_label_fn[label]
        n_gt = gt_counts[label]
        if n_gt == 0:
            warnings.append(f"class {label!r} has no ground truth after filtering; "
                            "AP undefined, excluded from mAP")
            per_class[label] = ClassReport(label, None, tp, fp, fn, 0.0, [])
            continue
        ap, curve = average_precision(flags, n_gt, cfg.ap_integration)
        recall = tp / n_gt
        per_class[label] = ClassReport(label, ap, tp, fp, fn, recall, curve)
        aps.append(ap)

    map_percent = 100.0 * (sum(aps) / len(aps)) if aps else 0.0
    if not aps:
        warnings.append("no class had ground truth; mAP reported as 0")
    return EvalReport(
        per_class=per_class,
        map_percent=map_percent,
        config=cfg,
        n_images=len(image_ids),
        n_detections_evaluated=len(filtered_dets),
        n_gt_evaluated=len(filtered_gt),
        warnings=warnings,
    )
