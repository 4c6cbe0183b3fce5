"""Scikit-learn style wrappers around the suppression kernels.

Each suppressor is a stateless transformer: ``fit`` only validates the
hyperparameters and returns self, ``transform`` maps a sequence of
detections to the kept (and, for soft modes, rescored) detections. Because
they inherit ``BaseEstimator``, ``get_params``/``set_params``/``clone`` and
pipeline composition work as usual.
"""

from __future__ import annotations

from typing import Sequence

from sklearn.base import BaseEstimator, TransformerMixin

from .data import Detection, JointDetection
from .suppression import (
    NmsConfig,
    SoftNmsConfig,
    SuppressionResult,
    soft_nms,
    standard_nms,
    vg_nms,
    vg_soft_nms,
)

__all__ = [
    "check_detections",
    "check_joint_detections",
    "StandardNMS",
    "SoftNMS",
    "VisibilityGuidedNMS",
    "VisibilityGuidedSoftNMS",
]


def check_detections(X) -> list[Detection]:
    """Validate an input sequence of single-box detections.

    Raises TypeError for wrong item types and ValueError for out-of-range
    scores, naming the offending index.
    """
    items = list(X)
    for i, det in enumerate(items):
        if not isinstance(det, Detection):
            raise TypeError(f"item {i}: expected Detection, got {type(det).__name__}")
        if not (0.0 <= det.score <= 1.0):
            raise ValueError(f"item {i}: score must lie in [0, 1], got {det.score!r}")
    return items


def check_joint_detections(X) -> list[JointDetection]:
    """Validate an input sequence of joint pixel/amodal detections."""
    items = list(X)
    for i, det in enumerate(items):
        if not isinstance(det, JointDetection):
            raise TypeError(f"item {i}: expected JointDetection, got {type(det).__name__}")
        if not (0.0 <= det.score <= 1.0):
            raise ValueError(f"item {i}: score must lie in [0, 1], got {det.score!r}")
    return items


class StandardNMS(BaseEstimator, TransformerMixin):
    """Greedy hard suppression over single-box detections."""

    def __init__(self, iou_threshold: float = 0.45, class_aware: bool = True):
        self.iou_threshold = iou_threshold
        self.class_aware = class_aware

    def _config(self) -> NmsConfig:
        return NmsConfig(iou_threshold=self.iou_threshold, class_aware=self.class_aware)

    def fit(self, X=None, y=None):
        self._config()
        return self

    def select(self, X: Sequence[Detection]) -> SuppressionResult:
        """Return the kept index set without materializing detections."""
        return standard_nms(check_detections(X), self._config())

    def transform(self, X: Sequence[Detection]) -> list[Detection]:
        dets = check_detections(X)
        result = standard_nms(dets, self._config())
        return [dets[i] for i in result.kept_indices]


class SoftNMS(BaseEstimator, TransformerMixin):
    """Score-decay suppression over single-box detections."""

    def __init__(self, mode: str = "gaussian", sigma: float = 0.5,
                 iou_threshold: float = 0.45, score_floor: float = 0.001,
                 class_aware: bool = True):
        self.mode = mode
        self.sigma = sigma
        self.iou_threshold = iou_threshold
        self.score_floor = score_floor
        self.class_aware = class_aware

    def _config(self) -> SoftNmsConfig:
        return SoftNmsConfig(mode=self.mode, sigma=self.sigma,
                             iou_threshold=self.iou_threshold,
                             score_floor=self.score_floor,
                             class_aware=self.class_aware)

    def fit(self, X=None, y=None):
        self._config()
        return self

    def select(self, X: Sequence[Detection]) -> SuppressionResult:
        return soft_nms(check_detections(X), self._config())

    def transform(self, X: Sequence[Detection]) -> list[Detection]:
        dets = check_detections(X)
        result = soft_nms(dets, self._config())
        return [Detection(dets[i].box, dets[i].label, score, dets[i].image_id)
                for i, score in (result.rescored or ())]


class VisibilityGuidedNMS(BaseEstimator, TransformerMixin):
    """Hard suppression on the pixel views of joint detections.

    ``transform`` returns the surviving joint detections; use
    ``transform_views`` for separate pixel/amodal lists.
    """

    def __init__(self, iou_threshold: float = 0.45, class_aware: bool = True):
        self.iou_threshold = iou_threshold
        self.class_aware = class_aware

    def _config(self) -> NmsConfig:
        return NmsConfig(iou_threshold=self.iou_threshold, class_aware=self.class_aware)

    def fit(self, X=None, y=None):
        self._config()
        return self

    def select(self, X: Sequence[JointDetection]) -> SuppressionResult:
        joints = check_joint_detections(X)
        result = vg_nms(joints, self._config())
        return SuppressionResult(kept_indices=result.kept_indices)

    def transform(self, X: Sequence[JointDetection]) -> list[JointDetection]:
        joints = check_joint_detections(X)
        result = vg_nms(joints, self._config())
        return [joints[i] for i in result.kept_indices]

    def transform_views(self, X: Sequence[JointDetection]) -> tuple[list[Detection], list[Detection]]:
        joints = check_joint_detections(X)
        result = vg_nms(joints, self._config())
        return result.d_pix, result.d_amodal


class VisibilityGuidedSoftNMS(BaseEstimator, TransformerMixin):
    """Score-decay suppression on the pixel views of joint detections."""

    def __init__(self, mode: str = "gaussian", sigma: float = 0.5,
                 iou_threshold: float = 0.45, score_floor: float = 0.001,
                 class_aware: bool = True):
        self.mode = mode
        self.sigma = sigma
        self.iou_threshold = iou_threshold
        self.score_floor = score_floor
        self.class_aware = class_aware

    def _config(self) -> SoftNmsConfig:
        return SoftNmsConfig(mode=self.mode, sigma=self.sigma,
                             iou_threshold=self.iou_threshold,
                             score_floor=self.score_floor,
                             class_aware=self.class_aware)

    def fit(self, X=None, y=None):
        self._config()
        return self

    def transform(self, X: Sequence[JointDetection]) -> list[JointDetection]:
        joints = check_joint_detections(X)
        result = vg_soft_nms(joints, self._config())
        return [JointDetection(joints[i].box_pix, joints[i].box_amodal,
                               joints[i].label, score, joints[i].image_id)
                for i, score in result.rescored]

    def transform_views(self, X: Sequence[JointDetection]) -> tuple[list[Detection], list[Detection]]:
        joints = check_joint_detections(X)
        result = vg_soft_nms(joints, self._config())
        return result.d_pix, result.d_amodal
