"""Data model for classes, detections, joint detections and ground truth."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

from .errors import ConfigError
from .geometry import BoundingBox, area

__all__ = [
    "CANONICAL_LABELS",
    "VEHICLE_LABELS",
    "PEDESTRIAN_LABELS",
    "ClassDef",
    "ClassTable",
    "Detection",
    "JointDetection",
    "GroundTruthObject",
    "ImageInfo",
    "DetectionSet",
    "JointDetectionSet",
    "GroundTruthSet",
    "Violation",
    "validate",
    "split_views",
    "split_view_lists",
]

CANONICAL_LABELS = ("car_van", "truck_bus", "pedestrian")
VEHICLE_LABELS = frozenset({"car_van", "truck_bus"})
PEDESTRIAN_LABELS = frozenset({"pedestrian"})

# Friendly column names for report tables.
DISPLAY_NAMES = {"car_van": "Car/Van", "truck_bus": "Truck/Bus", "pedestrian": "Pedestrian"}


@dataclass(frozen=True)
class ClassDef:
    id: int
    label: str


class ClassTable:
    """Ordered table of class labels; ids are table positions."""

    def __init__(self, labels: Sequence[str]):
        labels = [str(label) for label in labels]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"duplicate labels in class table: {labels}")
        if not labels:
            raise ConfigError("class table must contain at least one label")
        self._labels = tuple(labels)
        self._ids = {label: i for i, label in enumerate(labels)}

    @classmethod
    def canonical(cls) -> "ClassTable":
        return cls(CANONICAL_LABELS)

    @property
    def labels(self) -> tuple[str, ...]:
        return self._labels

    def id_of(self, label: str) -> int:
        return self._ids[label]

    def classes(self) -> list[ClassDef]:
        return [ClassDef(i, label) for i, label in enumerate(self._labels)]

    def __contains__(self, label: str) -> bool:
        return label in self._ids

    def __iter__(self) -> Iterator[str]:
        return iter(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, ClassTable) and other._labels == self._labels

    def __repr__(self) -> str:
        return f"ClassTable({list(self._labels)!r})"

    def same_labels(self, other: "ClassTable") -> bool:
        """Label-set equality, ignoring order."""
        return set(self._labels) == set(other._labels)


@dataclass(frozen=True)
class Detection:
    """One scored box of a single kind (pixel-based or amodal)."""

    box: BoundingBox
    label: str
    score: float
    image_id: str


@dataclass(frozen=True)
class JointDetection:
    """Paired pixel-based and amodal boxes sharing one label and one score.

    The pairing is structural: there is exactly one score and one label for
    both boxes, which is what makes index-aligned suppression well defined.
    """

    box_pix: BoundingBox
    box_amodal: BoundingBox
    label: str
    score: float
    image_id: str


@dataclass(frozen=True)
class GroundTruthObject:
    """Annotated object carrying both box variants.

    ``box_pix`` may be None for partial sets produced by amodal-only readers
    (e.g. KITTI label files); ``validate`` flags the gap and
    ``merge_pixel_amodal`` fills it.
    """

    box_amodal: BoundingBox
    label: str
    image_id: str
    object_id: str
    box_pix: BoundingBox | None = None


@dataclass(frozen=True)
class ImageInfo:
    id: str
    width: float
    height: float


def _group_by_image(items, image_ids: Sequence[str]) -> dict:
    groups: dict[str, list] = {image_id: [] for image_id in image_ids}
    for item in items:
        groups.setdefault(item.image_id, []).append(item)
    return groups


@dataclass
class GroundTruthSet:
    class_table: ClassTable
    images: list[ImageInfo]
    objects: list[GroundTruthObject]

    def by_image(self) -> dict[str, list[GroundTruthObject]]:
        return _group_by_image(self.objects, [im.id for im in self.images])

    def __len__(self) -> int:
        return len(self.objects)


@dataclass
class DetectionSet:
    """Detections carrying a single box kind, declared in ``box_kind``."""

    class_table: ClassTable
    images: list[ImageInfo]
    detections: list[Detection]
    box_kind: str = "amodal"

    def by_image(self) -> dict[str, list[Detection]]:
        return _group_by_image(self.detections, [im.id for im in self.images])

    def __len__(self) -> int:
        return len(self.detections)


@dataclass
class JointDetectionSet:
    class_table: ClassTable
    images: list[ImageInfo]
    detections: list[JointDetection]

    def by_image(self) -> dict[str, list[JointDetection]]:
        return _group_by_image(self.detections, [im.id for im in self.images])

    def __len__(self) -> int:
        return len(self.detections)


@dataclass(frozen=True)
class Violation:
    """One invariant breach. Violations are data, not exceptions."""

    locus: str
    field: str
    rule: str
    severity: str = "error"  # "error" | "warning"

    def __str__(self) -> str:
        return f"[{self.severity}] {self.locus}: {self.field}: {self.rule}"


def _check_score(locus: str, score: float, out: list[Violation]) -> None:
    if not isinstance(score, (int, float)) or not (0.0 <= score <= 1.0):
        out.append(Violation(locus, "score", f"score must lie in [0, 1], got {score!r}"))


def _check_box_bounds(locus: str, field_name: str, box: BoundingBox,
                      info: ImageInfo | None, out: list[Violation]) -> None:
    if info is None or info.width <= 0 or info.height <= 0:
        return
    x_lo, x_hi = -0.5 * info.width, 1.5 * info.width
    y_lo, y_hi = -0.5 * info.height, 1.5 * info.height
    if box.x_min < x_lo or box.x_max > x_hi or box.y_min < y_lo or box.y_max > y_hi:
        out.append(Violation(
            locus, field_name,
            f"box {box.as_tuple()} outside manifest bounds "
            f"[{x_lo}, {x_hi}] x [{y_lo}, {y_hi}] for image {info.id}"))


def _check_degenerate(locus: str, field_name: str, box: BoundingBox, out: list[Violation]) -> None:
    if area(box) == 0.0:
        out.append(Violation(locus, field_name, "zero-area box", severity="warning"))


def validate(dataset: GroundTruthSet | DetectionSet | JointDetectionSet) -> list[Violation]:
    """Check every set-level invariant; returns an empty list iff all hold.

    Pure and idempotent. Containment of the pixel box inside the amodal box
    is reported as a warning only: real detector regressions can violate it
    and the pairing contract does not require it.
    """
    out: list[Violation] = []
    table = dataset.class_table
    image_index = {im.id: im for im in dataset.images}

    seen_image_ids: set[str] = set()
    for im in dataset.images:
        if im.id in seen_image_ids:
            out.append(Violation(f"image {im.id}", "id", "duplicate image id in manifest"))
        seen_image_ids.add(im.id)

    if isinstance(dataset, GroundTruthSet):
        seen_object_ids: set[tuple[str, str]] = set()
        for i, obj in enumerate(dataset.objects):
            locus = f"object {obj.image_id}/{obj.object_id}"
            if obj.label not in table:
                out.append(Violation(locus, "class", f"label {obj.label!r} not in class table"))
            if obj.image_id not in image_index:
                out.append(Violation(locus, "image_id", f"image {obj.image_id!r} not in manifest"))
            key = (obj.image_id, obj.object_id)
            if key in seen_object_ids:
                out.append(Violation(locus, "object_id", "duplicate object id within image"))
            seen_object_ids.add(key)
            info = image_index.get(obj.image_id)
            _check_box_bounds(locus, "box_amodal", obj.box_amodal, info, out)
            _check_degenerate(locus, "box_amodal", obj.box_amodal, out)
            if obj.box_pix is None:
                out.append(Violation(locus, "box_pix", "ground truth requires both box kinds"))
            else:
                _check_box_bounds(locus, "box_pix", obj.box_pix, info, out)
                _check_degenerate(locus, "box_pix", obj.box_pix, out)
                if not _contains(obj.box_amodal, obj.box_pix):
                    out.append(Violation(
                        locus, "box_pix",
                        "pixel box not contained in amodal box", severity="warning"))
        return out

    joint = isinstance(dataset, JointDetectionSet)
    for i, det in enumerate(dataset.detections):
        locus = f"detection {i} (image {det.image_id})"
        if det.label not in table:
            out.append(Violation(locus, "class", f"label {det.label!r} not in class table"))
        if det.image_id not in image_index:
            out.append(Violation(locus, "image_id", f"image {det.image_id!r} not in manifest"))
        _check_score(locus, det.score, out)
        info = image_index.get(det.image_id)
        if joint:
            _check_box_bounds(locus, "box_pix", det.box_pix, info, out)
            _check_box_bounds(locus, "box_amodal", det.box_amodal, info, out)
            _check_degenerate(locus, "box_pix", det.box_pix, out)
            _check_degenerate(locus, "box_amodal", det.box_amodal, out)
            if not _contains(det.box_amodal, det.box_pix):
                out.append(Violation(
                    locus, "box_pix",
                    "pixel box not contained in amodal box", severity="warning"))
        else:
            _check_box_bounds(locus, "box", det.box, info, out)
            _check_degenerate(locus, "box", det.box, out)
    return out


def _contains(outer: BoundingBox, inner: BoundingBox) -> bool:
    return (outer.x_min <= inner.x_min and outer.y_min <= inner.y_min
            and outer.x_max >= inner.x_max and outer.y_max >= inner.y_max)


def split_views(joint: JointDetection) -> tuple[Detection, Detection]:
    """Project a joint detection onto its pixel view and its amodal view.

    Both outputs share the joint's label, score and image id.
    """
    pix = Detection(joint.box_pix, joint.label, joint.score, joint.image_id)
    amodal = Detection(joint.box_amodal, joint.label, joint.score, joint.image_id)
    return pix, amodal


def split_view_lists(joints: Sequence[JointDetection]) -> tuple[list[Detection], list[Detection]]:
    """Split a sequence of joints into index-aligned pixel and amodal lists."""
    pix: list[Detection] = []
    amodal: list[Detection] = []
    for joint in joints:
        p, a = split_views(joint)
        pix.append(p)
        amodal.append(a)
    return pix, amodal
