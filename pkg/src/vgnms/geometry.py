"""Axis-aligned box arithmetic: the IoU primitive everything else consumes.

All coordinates are continuous pixel values in corner form
(x_min, y_min, x_max, y_max). Every function here is pure and safe to call
concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "BoundingBox",
    "area",
    "intersection_area",
    "iou",
    "min_side",
    "boxes_to_array",
    "iou_one_to_many",
]


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned rectangle in pixel coordinates.

    Zero-area (degenerate) boxes are permitted; inverted or non-finite
    extents are rejected at construction.
    """

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        for name in ("x_min", "y_min", "x_max", "y_max"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"box coordinate {name} must be a finite number, got {value!r}")
        if self.x_max < self.x_min or self.y_max < self.y_min:
            raise ValueError(
                "inverted box extents: "
                f"({self.x_min}, {self.y_min}, {self.x_max}, {self.y_max})"
            )

    @classmethod
    def from_sequence(cls, xyxy: Sequence[float]) -> "BoundingBox":
        if len(xyxy) != 4:
            raise ValueError(f"expected 4 coordinates, got {len(xyxy)}")
        x0, y0, x1, y1 = (float(v) for v in xyxy)
        return cls(x0, y0, x1, y1)

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


def area(b: BoundingBox) -> float:
    """Box area in px^2 (0 for degenerate boxes)."""
    return (b.x_max - b.x_min) * (b.y_max - b.y_min)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    """Area of the overlap rectangle, 0 when the boxes are disjoint."""
    w = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    h = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if w <= 0.0 or h <= 0.0:
        return 0.0
    return w * h


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union in [0, 1]; 0 when the union has zero area."""
    inter = intersection_area(a, b)
    union = area(a) + area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def min_side(b: BoundingBox) -> float:
    """Smaller of width and height, used by the size-exclusion filters."""
    return min(b.x_max - b.x_min, b.y_max - b.y_min)


def boxes_to_array(boxes: Iterable[BoundingBox]) -> np.ndarray:
    """Stack boxes into an (n, 4) float64 array of corner coordinates."""
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)


def iou_one_to_many(box: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """IoU of one box row (shape (4,)) against each row of an (n, 4) array.

    Arithmetic mirrors :func:`iou` operation for operation so scalar and
    vectorized paths agree bit for bit.
    """
    w = np.minimum(box[2], boxes[:, 2]) - np.maximum(box[0], boxes[:, 0])
    h = np.minimum(box[3], boxes[:, 3]) - np.maximum(box[1], boxes[:, 1])
    inter = np.where((w > 0.0) & (h > 0.0), w * h, 0.0)
    area_one = (box[2] - box[0]) * (box[3] - box[1])
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    union = area_one + areas - inter
    out = np.zeros(len(boxes), dtype=np.float64)
    np.divide(inter, union, out=out, where=union > 0.0)
    return out
