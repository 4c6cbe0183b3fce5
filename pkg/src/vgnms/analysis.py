"""Occlusion analysis over annotation corpora.

For every size-qualified object we take the maximum IoU of its box against
every other object of the same category group in the same image, bin those
maxima into a density histogram, and derive the best recall any hard
suppression pass at threshold t can reach: objects whose maximum overlap
exceeds t cannot be resolved. Running the same bound on pixel-based boxes
instead gives the ceiling for visibility-guided suppression, and the two
ceilings differ by exactly the pixel histogram's tail mass above t.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .data import (
    Detection,
    GroundTruthSet,
    PEDESTRIAN_LABELS,
    VEHICLE_LABELS,
)
from .errors import ConfigError, DataError
from .geometry import boxes_to_array, iou_one_to_many, min_side
from .parallel import parallel_map
from .suppression import NmsConfig, standard_nms

__all__ = [
    "OverlapHistogram",
    "RecallBounds",
    "resolve_group",
    "max_iou_histogram",
    "tail_mass",
    "recall_bound_standard",
    "recall_bound_vg",
    "empirical_gt_nms_recall",
    "histogram_csv",
    "histogram_svg",
]

GROUPS = {"vehicles": frozenset(VEHICLE_LABELS), "pedestrians": frozenset(PEDESTRIAN_LABELS)}


@dataclass(frozen=True)
class OverlapHistogram:
    """Binned density of per-object max-IoU values.

    ``densities[i]`` covers [i * bin_width, (i+1) * bin_width); a max-IoU of
    exactly 1.0 lands in the last bin. Densities sum to 1 when
    ``object_count`` > 0 and are all zero otherwise.
    """

    bin_width: float
    densities: tuple[float, ...]
    object_count: int
    group: str
    box_kind: str

    def __post_init__(self) -> None:
        if self.object_count > 0:
            total = float(np.sum(self.densities))
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"densities must sum to 1, got {total}")
        if any(d < 0.0 for d in self.densities):
            raise ValueError("densities must be non-negative")

    @property
    def n_bins(self) -> int:
        return len(self.densities)

    def bin_lower_edges(self) -> np.ndarray:
        return np.arange(self.n_bins) * self.bin_width


def resolve_group(group: str | Iterable[str]) -> tuple[str, frozenset[str]]:
    """Map a group name or explicit label collection to (name, label set)."""
    if isinstance(group, str):
        if group not in GROUPS:
            raise ConfigError(
                f"unknown group {group!r}; use one of {sorted(GROUPS)} or pass labels")
        return group, GROUPS[group]
    labels = frozenset(str(x) for x in group)
    if not labels:
        raise ConfigError("custom group needs at least one label")
    return "custom", labels


def _n_bins(bin_width: float) -> int:
    if not (0.0 < bin_width <= 1.0):
        raise ConfigError(f"bin_width must lie in (0, 1], got {bin_width}")
    n = round(1.0 / bin_width)
    if abs(n * bin_width - 1.0) > 1e-9:
        raise ConfigError(f"bin_width must divide 1 evenly, got {bin_width}")
    return n


def max_iou_histogram(gt: GroundTruthSet, box_kind: str, group: str | Iterable[str],
                      min_box_side: float = 20.0, bin_width: float = 0.01,
                      neighbor_scope: str = "group", threads: int = 1) -> OverlapHistogram:
    """Histogram of per-object maximum IoU within the category group.

    For every size-qualified group member, the maximum IoU of its
    ``box_kind`` box against every other same-group object in the same
    image (objects alone in their group contribute 0). Objects whose
    evaluated box has a side below ``min_box_side`` do not contribute
    entries but still act as neighbors. ``neighbor_scope="any"`` widens the
    neighbor pool to all annotated objects regardless of label.
    """
    if box_kind not in ("pixel", "amodal"):
        raise ConfigError(f"box_kind must be 'pixel' or 'amodal', got {box_kind!r}")
    if neighbor_scope not in ("group", "any"):
        raise ConfigError(f"neighbor_scope must be 'group' or 'any', got {neighbor_scope!r}")
    group_name, labels = resolve_group(group)
    n_bins = _n_bins(bin_width)

    def box_of(o):
        box = o.box_pix if box_kind == "pixel" else o.box_amodal
        if box is None:
            raise DataError(f"object {o.image_id}/{o.object_id} has no {box_kind} box")
        return box

    def image_maxima(objs) -> list[float]:
        members = [o for o in objs if o.label in labels]
        if not members:
            return []
        pool = objs if neighbor_scope == "any" else members
        pool_boxes = [box_of(o) for o in pool]
        arr = boxes_to_array(pool_boxes)
        pool_pos = {id(o): i for i, o in enumerate(pool)}
        maxima = []
        for o in members:
            box = box_of(o)
            if min_side(box) < min_box_side:
                continue
            i = pool_pos[id(o)]
            if len(pool) == 1:
                maxima.append(0.0)
                continue
            others = np.delete(arr, i, axis=0)
            maxima.append(float(iou_one_to_many(arr[i], others).max()))
        return maxima

    groups = list(gt.by_image().values())
    all_maxima = [m for image in parallel_map(image_maxima, groups, threads) for m in image]

    counts = np.zeros(n_bins, dtype=np.float64)
    for m in all_maxima:
        index = min(int(m / bin_width), n_bins - 1)
        counts[index] += 1.0
    total = counts.sum()
    densities = counts / total if total > 0 else counts
    return OverlapHistogram(
        bin_width=bin_width,
        densities=tuple(densities.tolist()),
        object_count=int(total),
        group=group_name,
        box_kind=box_kind,
    )


def tail_mass(hist: OverlapHistogram, t_iou: float) -> float:
    """Total density of bins containing max-IoU values above ``t_iou``,
    i.e. every bin whose upper edge lies strictly above the threshold.

    When ``t_iou`` falls (numerically) on a bin edge the tail starts at the
    bin beginning there, so an object suppressible at threshold t (overlap
    strictly above t) always counts toward the tail; this keeps the
    histogram bound pessimistic relative to a greedy suppression pass at
    any bin width.
    """
    q = t_iou / hist.bin_width
    nearest = round(q)
    if abs(q - nearest) < 1e-9:
        start = int(nearest)
    else:
        start = int(math.floor(q))
    if start >= hist.n_bins:
        return 0.0
    return float(np.sum(hist.densities[max(start, 0):]))


@dataclass(frozen=True)
class RecallBounds:
    """Best-achievable recalls for hard suppression on amodal boxes (r_max)
    and for the visibility-guided variant (r_vg), plus the per-bin density
    difference summed over the suppressed tail (kappa_tail)."""

    r_max: float
    r_vg: float
    delta_percent: float
    kappa_tail: float


def _check_threshold(t_iou: float) -> None:
    if not (0.0 < t_iou < 1.0):
        raise ConfigError(f"t_iou must lie in (0, 1), got {t_iou}")


def recall_bound_standard(h_amodal: OverlapHistogram, t_iou: float = 0.45) -> float:
    """Upper recall bound for hard suppression on amodal boxes:
    1 minus the amodal histogram's tail mass above the threshold."""
    _check_threshold(t_iou)
    return 1.0 - tail_mass(h_amodal, t_iou)


def recall_bound_vg(h_amodal: OverlapHistogram, h_pix: OverlapHistogram,
                    t_iou: float = 0.45) -> RecallBounds:
    """Both recall bounds. r_vg equals r_max plus the pixel histogram's tail
    mass above the threshold, exactly; the rescued mass per bin is the
    amodal minus pixel density difference."""
    _check_threshold(t_iou)
    if h_amodal.bin_width != h_pix.bin_width or h_amodal.n_bins != h_pix.n_bins:
        raise ConfigError(
            f"histogram binning differs: {h_amodal.bin_width}/{h_amodal.n_bins} vs "
            f"{h_pix.bin_width}/{h_pix.n_bins}")
    if h_amodal.group != h_pix.group:
        raise ConfigError(f"histogram groups differ: {h_amodal.group!r} vs {h_pix.group!r}")
    r_max = recall_bound_standard(h_amodal, t_iou)
    pix_tail = tail_mass(h_pix, t_iou)
    r_vg = r_max + pix_tail
    kappa_tail = tail_mass(h_amodal, t_iou) - pix_tail
    if r_max > 0.0:
        delta_percent = 100.0 * (r_vg - r_max) / r_max
    else:
        delta_percent = math.inf if r_vg > 0.0 else 0.0
    return RecallBounds(r_max=r_max, r_vg=r_vg, delta_percent=delta_percent,
                        kappa_tail=kappa_tail)


def empirical_gt_nms_recall(gt: GroundTruthSet, box_kind: str,
                            t_iou: float = 0.45, group: str | Iterable[str] = "vehicles",
                            min_box_side: float = 20.0) -> float:
    """Recall left after running hard suppression on the annotations themselves.

    All same-group boxes of an image enter suppression with score 1.0 (ties
    broken by input order); recall counts size-qualified objects only. This
    is the operational cross-check of the histogram bound: the histogram
    treats both members of an over-threshold pair as lost while the greedy
    pass keeps one, so the measured recall is never below the bound.
    """
    _check_threshold(t_iou)
    if box_kind not in ("pixel", "amodal"):
        raise ConfigError(f"box_kind must be 'pixel' or 'amodal', got {box_kind!r}")
    _, labels = resolve_group(group)
    cfg = NmsConfig(iou_threshold=t_iou, class_aware=False)
    qualified = 0
    kept_qualified = 0
    for image_id, objs in gt.by_image().items():
        members = [o for o in objs if o.label in labels]
        if not members:
            continue
        dets = []
        for o in members:
            box = o.box_pix if box_kind == "pixel" else o.box_amodal
            if box is None:
                raise DataError(f"object {o.image_id}/{o.object_id} has no {box_kind} box")
            dets.append(Detection(box, o.label, 1.0, image_id))
        keep = set(standard_nms(dets, cfg).kept_indices)
        for i, det in enumerate(dets):
            if min_side(det.box) < min_box_side:
                continue
            qualified += 1
            if i in keep:
                kept_qualified += 1
    if qualified == 0:
        return 1.0
    return kept_qualified / qualified


def histogram_csv(hist: OverlapHistogram) -> str:
    """CSV body with one (bin_lower, density) row per bin."""
    lines = ["bin_lower,density"]
    for edge, density in zip(hist.bin_lower_edges(), hist.densities):
        lines.append(f"{edge:.6g},{density!r}")
    return "\n".join(lines) + "\n"


def histogram_svg(h_amodal: OverlapHistogram, h_pix: OverlapHistogram,
                  t_iou: float, title: str = "") -> str:
    """Self-contained SVG bar chart overlaying the two histograms with a
    vertical line at the suppression threshold. No plotting dependency."""
    width, height = 720, 360
    left, right, top, bottom = 55, 15, 30, 40
    plot_w = width - left - right
    plot_h = height - top - bottom
    peak = max(1e-12, max(max(h_amodal.densities), max(h_pix.densities)))

    def x_of(v: float) -> float:
        return left + v * plot_w

    def y_of(d: float) -> float:
        return top + plot_h * (1.0 - d / peak)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2}" y="18" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="13">{title}</text>')
    for hist, color, opacity in ((h_amodal, "#417505", 0.75), (h_pix, "#d0021b", 0.6)):
        bw = plot_w * hist.bin_width
        for i, density in enumerate(hist.densities):
            if density <= 0.0:
                continue
            x = x_of(i * hist.bin_width)
            y = y_of(density)
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bw:.2f}" '
                f'height="{top + plot_h - y:.2f}" fill="{color}" fill-opacity="{opacity}"/>')
    tx = x_of(t_iou)
    parts.append(f'<line x1="{tx:.2f}" y1="{top}" x2="{tx:.2f}" y2="{top + plot_h}" '
                 f'stroke="#1d5fd0" stroke-width="2"/>')
    parts.append(f'<line x1="{left}" y1="{top + plot_h}" x2="{left + plot_w}" '
                 f'y2="{top + plot_h}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + plot_h}" '
                 f'stroke="black"/>')
    for tick in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        x = x_of(tick)
        parts.append(f'<line x1="{x:.2f}" y1="{top + plot_h}" x2="{x:.2f}" '
                     f'y2="{top + plot_h + 5}" stroke="black"/>')
        parts.append(f'<text x="{x:.2f}" y="{top + plot_h + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{tick:g}</text>')
    parts.append(f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="12">max IoU</text>')
    legend_y = top + 12
    parts.append(f'<rect x="{left + plot_w - 160}" y="{legend_y - 9}" width="10" height="10" '
                 f'fill="#417505" fill-opacity="0.75"/>')
    parts.append(f'<text x="{left + plot_w - 145}" y="{legend_y}" font-family="sans-serif" '
                 f'font-size="11">amodal</text>')
    parts.append(f'<rect x="{left + plot_w - 80}" y="{legend_y - 9}" width="10" height="10" '
                 f'fill="#d0021b" fill-opacity="0.6"/>')
    parts.append(f'<text x="{left + plot_w - 65}" y="{legend_y}" font-family="sans-serif" '
                 f'font-size="11">pixel</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
