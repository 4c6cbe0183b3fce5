"""The four suppression strategies: standard NMS, Soft NMS, and the
visibility-guided variants that suppress on pixel-based boxes while keeping
the amodal boxes of the surviving indices.

All functions are pure. Kept indices always refer to the original input
order and are returned in canonical ascending order. Score ties are broken
by preferring the lower original input index, which makes every strategy a
deterministic function of (input, config).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .data import Detection, JointDetection, split_view_lists
from .errors import ConfigError
from .geometry import boxes_to_array, iou_one_to_many

__all__ = [
    "NmsConfig",
    "SoftNmsConfig",
    "SuppressionResult",
    "VgNmsResult",
    "VgSoftNmsResult",
    "standard_nms",
    "soft_nms",
    "vg_nms",
    "vg_soft_nms",
]


@dataclass(frozen=True)
class NmsConfig:
    """Hard-suppression parameters.

    ``class_aware`` runs suppression independently per class label, so
    detections of different classes never suppress each other.
    """

    iou_threshold: float = 0.45
    class_aware: bool = True

    def __post_init__(self) -> None:
        if not (0.0 < self.iou_threshold < 1.0):
            raise ConfigError(f"iou_threshold must lie in (0, 1), got {self.iou_threshold}")


@dataclass(frozen=True)
class SoftNmsConfig:
    """Score-decay suppression parameters.

    ``linear`` mode multiplies overlapping candidates' scores by (1 - iou)
    once iou exceeds ``iou_threshold``; ``gaussian`` mode multiplies by
    exp(-iou^2 / sigma) unconditionally. Candidates whose score drops below
    ``score_floor`` are discarded.
    """

    mode: str = "gaussian"
    sigma: float = 0.5
    iou_threshold: float = 0.45
    score_floor: float = 0.001
    class_aware: bool = True

    def __post_init__(self) -> None:
        if self.mode not in ("linear", "gaussian"):
            raise ConfigError(f"mode must be 'linear' or 'gaussian', got {self.mode!r}")
        if self.sigma <= 0.0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if not (0.0 < self.iou_threshold < 1.0):
            raise ConfigError(f"iou_threshold must lie in (0, 1), got {self.iou_threshold}")
        if not (0.0 <= self.score_floor < 1.0):
            raise ConfigError(f"score_floor must lie in [0, 1), got {self.score_floor}")


@dataclass(frozen=True)
class SuppressionResult:
    """Indices kept by a suppression pass, ascending, plus rescored values
    for soft modes (aligned with ``kept_indices``; None for hard modes)."""

    kept_indices: tuple[int, ...]
    rescored: tuple[tuple[int, float], ...] | None = None

    def __len__(self) -> int:
        return len(self.kept_indices)


class VgNmsResult(NamedTuple):
    d_pix: list[Detection]
    d_amodal: list[Detection]
    kept_indices: tuple[int, ...]


class VgSoftNmsResult(NamedTuple):
    d_pix: list[Detection]
    d_amodal: list[Detection]
    rescored: tuple[tuple[int, float], ...]


def _class_groups(labels: Sequence[str], class_aware: bool) -> list[np.ndarray]:
    if not class_aware:
        return [np.arange(len(labels))]
    groups: dict[str, list[int]] = {}
    for i, label in enumerate(labels):
        groups.setdefault(label, []).append(i)
    return [np.asarray(groups[label], dtype=np.intp) for label in sorted(groups)]


def _hard_nms_group(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list[int]:
    # Stable argsort on negated scores: ties resolve to the lower index.
    order = np.argsort(-scores, kind="stable")
    kept: list[int] = []
    while order.size:
        top = int(order[0])
        kept.append(top)
        if order.size == 1:
            break
        rest = order[1:]
        overlaps = iou_one_to_many(boxes[top], boxes[rest])
        order = rest[overlaps <= iou_threshold]
    return kept


def _soft_nms_group(boxes: np.ndarray, scores: np.ndarray,
                    cfg: SoftNmsConfig) -> tuple[list[int], list[float]]:
    current = scores.astype(np.float64).copy()
    alive = np.ones(len(scores), dtype=bool)
    kept: list[int] = []
    rescored: list[float] = []
    while alive.any():
        # argmax over alive candidates; first occurrence wins ties, and the
        # array stays in original order, so ties resolve to the lower index.
        masked = np.where(alive, current, -np.inf)
        top = int(np.argmax(masked))
        alive[top] = False
        kept.append(top)
        rescored.append(float(current[top]))
        remaining = np.flatnonzero(alive)
        if remaining.size == 0:
            break
        overlaps = iou_one_to_many(boxes[top], boxes[remaining])
        if cfg.mode == "linear":
            factors = np.where(overlaps > cfg.iou_threshold, 1.0 - overlaps, 1.0)
        else:
            factors = np.exp(-(overlaps * overlaps) / cfg.sigma)
        current[remaining] = current[remaining] * factors
        dropped = remaining[current[remaining] < cfg.score_floor]
        alive[dropped] = False
    return kept, rescored


def _hard_nms_core(boxes: np.ndarray, scores: np.ndarray, labels: Sequence[str],
                   cfg: NmsConfig) -> tuple[int, ...]:
    kept: list[int] = []
    for group in _class_groups(labels, cfg.class_aware):
        local = _hard_nms_group(boxes[group], scores[group], cfg.iou_threshold)
        kept.extend(int(group[i]) for i in local)
    return tuple(sorted(kept))


def _soft_nms_core(boxes: np.ndarray, scores: np.ndarray, labels: Sequence[str],
                   cfg: SoftNmsConfig) -> tuple[tuple[int, float], ...]:
    pairs: list[tuple[int, float]] = []
    for group in _class_groups(labels, cfg.class_aware):
        kept, rescored = _soft_nms_group(boxes[group], scores[group], cfg)
        pairs.extend((int(group[i]), s) for i, s in zip(kept, rescored))
    pairs.sort(key=lambda p: p[0])
    return tuple(pairs)


def standard_nms(dets: Sequence[Detection], cfg: NmsConfig | None = None) -> SuppressionResult:
    """Greedy hard suppression.

    Sorts by score descending, repeatedly accepts the top candidate and
    discards every remaining candidate whose IoU with it exceeds the
    threshold. Returns indices into the original input order.
    """
    cfg = cfg or NmsConfig()
    if not dets:
        return SuppressionResult(kept_indices=())
    boxes = boxes_to_array([d.box for d in dets])
    scores = np.array([d.score for d in dets], dtype=np.float64)
    kept = _hard_nms_core(boxes, scores, [d.label for d in dets], cfg)
    return SuppressionResult(kept_indices=kept)


def soft_nms(dets: Sequence[Detection], cfg: SoftNmsConfig | None = None) -> SuppressionResult:
    """Iterative score-decay suppression.

    At each step the current top-scoring candidate is accepted and every
    remaining candidate's score is decayed by its overlap with it; scores
    never increase. Candidates falling below the score floor are dropped.
    """
    cfg = cfg or SoftNmsConfig()
    if not dets:
        return SuppressionResult(kept_indices=(), rescored=())
    boxes = boxes_to_array([d.box for d in dets])
    scores = np.array([d.score for d in dets], dtype=np.float64)
    pairs = _soft_nms_core(boxes, scores, [d.label for d in dets], cfg)
    return SuppressionResult(
        kept_indices=tuple(i for i, _ in pairs),
        rescored=pairs,
    )


def vg_nms(joints: Sequence[JointDetection], cfg: NmsConfig | None = None) -> VgNmsResult:
    """Visibility-guided NMS.

    Runs standard NMS on the pixel-based views and selects *both* the pixel
    and the amodal views with the surviving index set, so the outputs stay
    index-aligned and the amodal output keeps boxes whose visible parts do
    not overlap even when their full extents do.
    """
    cfg = cfg or NmsConfig()
    if not joints:
        return VgNmsResult(d_pix=[], d_amodal=[], kept_indices=())
    boxes = boxes_to_array([j.box_pix for j in joints])
    scores = np.array([j.score for j in joints], dtype=np.float64)
    kept = _hard_nms_core(boxes, scores, [j.label for j in joints], cfg)
    d_pix = [Detection(joints[i].box_pix, joints[i].label, joints[i].score,
                       joints[i].image_id) for i in kept]
    d_amodal = [Detection(joints[i].box_amodal, joints[i].label, joints[i].score,
                          joints[i].image_id) for i in kept]
    return VgNmsResult(d_pix=d_pix, d_amodal=d_amodal, kept_indices=kept)


def vg_soft_nms(joints: Sequence[JointDetection],
                cfg: SoftNmsConfig | None = None) -> VgSoftNmsResult:
    """Visibility-guided Soft NMS: score decay on the pixel views, with the
    surviving indices and rescored confidences applied to both outputs."""
    cfg = cfg or SoftNmsConfig()
    if not joints:
        return VgSoftNmsResult(d_pix=[], d_amodal=[], rescored=())
    boxes = boxes_to_array([j.box_pix for j in joints])
    scores = np.array([j.score for j in joints], dtype=np.float64)
    rescored = _soft_nms_core(boxes, scores, [j.label for j in joints], cfg)
    d_pix = [Detection(joints[i].box_pix, joints[i].label, s, joints[i].image_id)
             for i, s in rescored]
    d_amodal = [Detection(joints[i].box_amodal, joints[i].label, s, joints[i].image_id)
                for i, s in rescored]
    return VgSoftNmsResult(d_pix=d_pix, d_amodal=d_amodal, rescored=rescored)
