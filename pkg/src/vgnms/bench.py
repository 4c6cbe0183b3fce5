"""Runtime measurement of the suppression variants on identical inputs.

Medians over repeated wall-clock runs (monotonic timer), never single
samples; at least 5 warmup and 30 timed repetitions are enforced. Timed
outputs are asserted identical to an untimed reference pass, so measuring
can never change results. The report also counts the boxes with an
over-threshold overlap per box kind, the statistic that explains why score
decay gets slower on amodal boxes than on pixel-based ones.
"""

from __future__ import annotations

import json
import os
import platform
import statistics
import time
from dataclasses import dataclass, field

import numpy as np

from .data import DetectionSet, JointDetectionSet, split_view_lists
from .errors import ConfigError
from .geometry import boxes_to_array, iou_one_to_many
from .suppression import NmsConfig, SoftNmsConfig, soft_nms, standard_nms, vg_nms, vg_soft_nms

__all__ = ["VariantStats", "BenchReport", "high_overlap_stats", "run_bench"]

VARIANTS = ("standard", "soft", "vg", "vg-soft")
MIN_REPETITIONS = 30
MIN_WARMUP = 5


@dataclass
class VariantStats:
    name: str
    median_s: float
    p95_s: float
    mean_s: float
    min_s: float
    repetitions: int
    relative_to_standard: float | None = None


@dataclass
class BenchReport:
    variants: dict[str, VariantStats]
    n_boxes: int
    n_images: int
    workload_kind: str
    iou_threshold: float
    overlap_stats: dict
    host: dict
    repetitions: int
    warmup: int
    outputs_verified: bool
    notes: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "workload": {
                "n_boxes": self.n_boxes,
                "n_images": self.n_images,
                "kind": self.workload_kind,
                "overlap_stats": self.overlap_stats,
            },
            "config": {
                "iou_threshold": self.iou_threshold,
                "repetitions": self.repetitions,
                "warmup": self.warmup,
            },
            "host": self.host,
            "outputs_verified": self.outputs_verified,
            "variants": {
                name: {
                    "median_s": v.median_s,
                    "p95_s": v.p95_s,
                    "mean_s": v.mean_s,
                    "min_s": v.min_s,
                    "repetitions": v.repetitions,
                    "relative_to_standard": v.relative_to_standard,
                }
                for name, v in self.variants.items()
            },
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [
            f"workload: {self.n_boxes} boxes over {self.n_images} images "
            f"({self.workload_kind}), iou threshold {self.iou_threshold}",
            f"repetitions: {self.repetitions} after {self.warmup} warmup; "
            f"outputs verified identical: {self.outputs_verified}",
        ]
        if self.overlap_stats:
            pix = self.overlap_stats.get("pixel")
            amo = self.overlap_stats.get("amodal")
            if pix is not None and amo is not None:
                ratio = self.overlap_stats.get("amodal_to_pixel_ratio")
                lines.append(
                    f"boxes with overlap > {self.iou_threshold}: "
                    f"amodal {amo['boxes_with_high_overlap']} "
                    f"({amo['high_overlap_pairs']} pairs), "
                    f"pixel {pix['boxes_with_high_overlap']} "
                    f"({pix['high_overlap_pairs']} pairs), "
                    f"ratio {ratio if ratio is not None else 'n/a'}")
        lines.append(f"{'variant':<10}{'median [ms]':>14}{'p95 [ms]':>12}"
                     f"{'mean [ms]':>12}{'vs standard':>13}")
        for name, v in self.variants.items():
            rel = f"{v.relative_to_standard:.3f}x" if v.relative_to_standard else "-"
            lines.append(f"{name:<10}{1e3 * v.median_s:>14.3f}{1e3 * v.p95_s:>12.3f}"
                         f"{1e3 * v.mean_s:>12.3f}{rel:>13}")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _count_high_overlap(groups: list[list], threshold: float) -> dict:
    """Boxes (and pairs) whose same-class IoU with another box in the same
    image exceeds the threshold."""
    boxes_high = 0
    pairs_high = 0
    for dets in groups:
        by_label: dict[str, list] = {}
        for d in dets:
            by_label.setdefault(d.label, []).append(d)
        for label_dets in by_label.values():
            n = len(label_dets)
            if n < 2:
                continue
            arr = boxes_to_array([d.box for d in label_dets])
            flags = np.zeros(n, dtype=bool)
            for i in range(n - 1):
                overlaps = iou_one_to_many(arr[i], arr[i + 1:])
                over = overlaps > threshold
                pairs_high += int(over.sum())
                if over.any():
                    flags[i] = True
                    flags[i + 1:][over] = True
            boxes_high += int(flags.sum())
    return {"boxes_with_high_overlap": boxes_high, "high_overlap_pairs": pairs_high}


def high_overlap_stats(workload: DetectionSet | JointDetectionSet,
                       threshold: float = 0.45) -> dict:
    """Per-box-kind overlap statistics for a workload (both kinds for joint
    workloads, plus their ratio)."""
    if isinstance(workload, JointDetectionSet):
        pix_groups = []
        amo_groups = []
        for dets in workload.by_image().values():
            pix, amo = split_view_lists(dets)
            pix_groups.append(pix)
            amo_groups.append(amo)
        pix_stats = _count_high_overlap(pix_groups, threshold)
        amo_stats = _count_high_overlap(amo_groups, threshold)
        ratio = None
        if pix_stats["boxes_with_high_overlap"] > 0:
            ratio = amo_stats["boxes_with_high_overlap"] / pix_stats["boxes_with_high_overlap"]
        return {"pixel": pix_stats, "amodal": amo_stats, "amodal_to_pixel_ratio": ratio}
    groups = list(workload.by_image().values())
    return {workload.box_kind: _count_high_overlap(groups, threshold)}


def _host_descriptor() -> dict:
    return {
        "platform": platform.platform(),
        "machine": platform.machine(),
        "python": platform.python_version(),
        "cpu_count": os.cpu_count(),
    }


def run_bench(workload: DetectionSet | JointDetectionSet,
              variants: tuple[str, ...] = ("standard", "vg"),
              repetitions: int = MIN_REPETITIONS,
              warmup: int = MIN_WARMUP,
              nms_cfg: NmsConfig | None = None,
              soft_cfg: SoftNmsConfig | None = None) -> BenchReport:
    """Time each variant over the whole per-image workload.

    Joint workloads run hard/soft suppression on the amodal views (the
    deployment baseline) and the vg variants on the joints; single-kind
    workloads only support the non-vg variants.
    """
    if len(workload) == 0:
        raise ConfigError("bench workload must be nonempty")
    if repetitions < MIN_REPETITIONS:
        raise ConfigError(f"repetitions must be >= {MIN_REPETITIONS}, got {repetitions}")
    if warmup < MIN_WARMUP:
        raise ConfigError(f"warmup must be >= {MIN_WARMUP}, got {warmup}")
    for v in variants:
        if v not in VARIANTS:
            raise ConfigError(f"unknown variant {v!r}; choose from {VARIANTS}")
    nms_cfg = nms_cfg or NmsConfig()
    soft_cfg = soft_cfg or SoftNmsConfig()

    joint = isinstance(workload, JointDetectionSet)
    per_image = [dets for dets in workload.by_image().values() if dets]
    if joint:
        amodal_views = [split_view_lists(dets)[1] for dets in per_image]
    else:
        if any(v in ("vg", "vg-soft") for v in variants):
            raise ConfigError(
                "vg variants require joint detections (pixel and amodal boxes "
                "per candidate); this workload carries a single box kind")
        amodal_views = per_image

    def make_runner(name: str):
        if name == "standard":
            return lambda: [standard_nms(dets, nms_cfg).kept_indices for dets in amodal_views]
        if name == "soft":
            return lambda: [soft_nms(dets, soft_cfg).rescored for dets in amodal_views]
        if name == "vg":
            return lambda: [vg_nms(dets, nms_cfg).kept_indices for dets in per_image]
        return lambda: [vg_soft_nms(dets, soft_cfg).rescored for dets in per_image]

    stats: dict[str, VariantStats] = {}
    verified = True
    for name in variants:
        runner = make_runner(name)
        reference = runner()
        for _ in range(warmup):
            runner()
        times = []
        for _ in range(repetitions):
            start = time.perf_counter()
            result = runner()
            times.append(time.perf_counter() - start)
            if result != reference:
                verified = False
        stats[name] = VariantStats(
            name=name,
            median_s=float(statistics.median(times)),
            p95_s=float(np.percentile(times, 95)),
            mean_s=float(statistics.fmean(times)),
            min_s=float(min(times)),
            repetitions=repetitions,
        )
    if "standard" in stats:
        base = stats["standard"].median_s
        if base > 0:
            for v in stats.values():
                v.relative_to_standard = v.median_s / base

    return BenchReport(
        variants=stats,
        n_boxes=len(workload),
        n_images=len(workload.images),
        workload_kind="joint" if joint else workload.box_kind,
        iou_threshold=nms_cfg.iou_threshold,
        overlap_stats=high_overlap_stats(workload, nms_cfg.iou_threshold),
        host=_host_descriptor(),
        repetitions=repetitions,
        warmup=warmup,
        outputs_verified=verified,
        notes=["timings are wall-clock measurements and vary between runs; "
               "suppression outputs and overlap statistics are deterministic"],
    )
