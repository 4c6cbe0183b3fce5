"""Read and write annotation/detection corpora.

The native format is line-delimited JSON: a header object followed by one
record object per line. Ground-truth records carry both box kinds;
detection records carry a score and either one box kind (uniform across
the file) or both, which makes them joint detections.

Header:   {"schema_version": "1", "classes": [...],
           "images": [{"id": ..., "width": ..., "height": ...}, ...]}
Record:   {"image_id": ..., "object_id": ..., "class": ...,
           "box_pix": [x0, y0, x1, y1], "box_amodal": [x0, y0, x1, y1]}
Detection records add "score"; "object_id" is optional for them.

Structural problems (malformed JSON, unknown schema version, missing
required fields) raise DataError with the record locus. Value-level
problems (uninstantiable boxes) become Violations: the record is skipped,
counted, and reported, never dropped silently.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

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
    validate,
)
from .errors import ConfigError, DataError
from .geometry import BoundingBox, iou

__all__ = [
    "SCHEMA_VERSION",
    "DEFAULT_KITTI_CLASS_MAP",
    "LoadReport",
    "MergeResult",
    "read_native",
    "write_native",
    "read_kitti_labels",
    "merge_pixel_amodal",
]

SCHEMA_VERSION = "1"

# KITTI object types mapped onto the shared class definitions. Types absent
# here (DontCare, Cyclist, Tram, Misc, ...) are skipped with a counter.
DEFAULT_KITTI_CLASS_MAP = {
    "Car": "car_van",
    "Van": "car_van",
    "Truck": "truck_bus",
    "Bus": "truck_bus",
    "Pedestrian": "pedestrian",
    "Person_sitting": "pedestrian",
}


@dataclass
class LoadReport:
    """What a reader skipped or flagged while building a typed set."""

    violations: list[Violation] = field(default_factory=list)
    counters: Counter = field(default_factory=Counter)

    def skipped_total(self) -> int:
        return sum(self.counters.values())

    def summary_lines(self, max_errors: int = 50) -> list[str]:
        """Error violations listed individually (capped), warnings
        aggregated per rule so crowded corpora stay readable."""
        errors = [v for v in self.violations if v.severity == "error"]
        lines = [str(v) for v in errors[:max_errors]]
        if len(errors) > max_errors:
            lines.append(f"... and {len(errors) - max_errors} more errors")
        warning_counts: Counter = Counter(
            f"{v.field}: {v.rule}" for v in self.violations if v.severity == "warning")
        for rule, count in sorted(warning_counts.items()):
            lines.append(f"[warning] x{count}: {rule}")
        for name, count in sorted(self.counters.items()):
            lines.append(f"skipped[{name}] = {count}")
        return lines


def _parse_box(record: dict, key: str, locus: str,
               report: LoadReport) -> BoundingBox | None:
    """Box from a record value, or None (with a violation) if unusable."""
    raw = record[key]
    try:
        if not isinstance(raw, (list, tuple)) or len(raw) != 4:
            raise ValueError(f"expected [x0, y0, x1, y1], got {raw!r}")
        return BoundingBox.from_sequence(raw)
    except (TypeError, ValueError) as exc:
        report.violations.append(Violation(locus, key, f"invalid box: {exc}"))
        report.counters[f"invalid_{key}"] += 1
        return None


def _require(record: dict, key: str, locus: str):
    if key not in record:
        raise DataError(f"{locus}: missing required field {key!r}")
    return record[key]


def _read_lines(path: str | Path) -> tuple[dict, list[tuple[int, dict]]]:
    path = Path(path)
    header: dict | None = None
    records: list[tuple[int, dict]] = []
    with path.open("r", encoding="utf-8") as stream:
        for line_no, line in enumerate(stream, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: malformed JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise DataError(f"{path}:{line_no}: expected a JSON object")
            if header is None:
                header = obj
            else:
                records.append((line_no, obj))
    if header is None:
        raise DataError(f"{path}: empty file, expected a header line")
    return header, records


def _parse_header(header: dict, path: str | Path) -> tuple[ClassTable, list[ImageInfo]]:
    version = _require(header, "schema_version", f"{path}: header")
    if version != SCHEMA_VERSION:
        raise DataError(f"{path}: unknown schema_version {version!r}, expected {SCHEMA_VERSION!r}")
    classes = _require(header, "classes", f"{path}: header")
    images_raw = _require(header, "images", f"{path}: header")
    try:
        table = ClassTable(classes)
    except ConfigError as exc:
        raise DataError(f"{path}: header: {exc}") from exc
    if not isinstance(images_raw, list):
        raise DataError(f"{path}: header: images must be a list")
    images = []
    for im in images_raw:
        if not isinstance(im, dict):
            raise DataError(f"{path}: header: image entries must be objects, got {im!r}")
        images.append(ImageInfo(
            id=str(_require(im, "id", f"{path}: header images")),
            width=float(_require(im, "width", f"{path}: header images")),
            height=float(_require(im, "height", f"{path}: header images")),
        ))
    return table, images


def read_native(path: str | Path, kind: str = "auto"):
    """Read a native-schema file.

    ``kind`` is "gt", "detections" or "auto" (detections iff records carry
    scores). Returns (dataset, LoadReport); the dataset is a
    GroundTruthSet, DetectionSet or JointDetectionSet depending on content.
    ``validate`` has already been applied, with its findings appended to
    the report.
    """
    if kind not in ("auto", "gt", "detections"):
        raise ConfigError(f"kind must be 'auto', 'gt' or 'detections', got {kind!r}")
    header, records = _read_lines(path)
    table, images = _parse_header(header, path)
    report = LoadReport()

    if kind == "auto":
        with_score = sum(1 for _, r in records if "score" in r)
        if with_score and with_score != len(records):
            raise DataError(f"{path}: mixed records (some with score, some without)")
        kind = "detections" if (records and with_score) else "gt"

    if kind == "gt":
        objects: list[GroundTruthObject] = []
        for line_no, record in records:
            locus = f"{path}:{line_no}"
            image_id = str(_require(record, "image_id", locus))
            object_id = str(_require(record, "object_id", locus))
            label = str(_require(record, "class", locus))
            _require(record, "box_pix", locus)
            _require(record, "box_amodal", locus)
            box_pix = _parse_box(record, "box_pix", locus, report)
            box_amodal = _parse_box(record, "box_amodal", locus, report)
            if box_pix is None or box_amodal is None:
                report.counters["skipped_record"] += 1
                continue
            objects.append(GroundTruthObject(
                box_amodal=box_amodal, label=label, image_id=image_id,
                object_id=object_id, box_pix=box_pix))
        dataset = GroundTruthSet(class_table=table, images=images, objects=objects)
        report.violations.extend(validate(dataset))
        return dataset, report

    kinds_seen = set()
    rows = []
    for line_no, record in records:
        locus = f"{path}:{line_no}"
        image_id = str(_require(record, "image_id", locus))
        label = str(_require(record, "class", locus))
        score_raw = _require(record, "score", locus)
        if not isinstance(score_raw, (int, float)) or isinstance(score_raw, bool):
            report.violations.append(Violation(locus, "score", f"non-numeric score {score_raw!r}"))
            report.counters["invalid_score"] += 1
            report.counters["skipped_record"] += 1
            continue
        present = tuple(k for k in ("box_pix", "box_amodal") if k in record)
        if not present:
            raise DataError(f"{locus}: detection record needs box_pix and/or box_amodal")
        kinds_seen.add(present)
        boxes = {}
        bad = False
        for key in present:
            box = _parse_box(record, key, locus, report)
            if box is None:
                bad = True
            boxes[key] = box
        if bad:
            report.counters["skipped_record"] += 1
            continue
        rows.append((image_id, label, float(score_raw), boxes))

    if len(kinds_seen) > 1:
        raise DataError(f"{path}: detection records mix box kinds {sorted(kinds_seen)}")
    if rows and next(iter(kinds_seen)) == ("box_pix", "box_amodal"):
        joints = [JointDetection(box_pix=b["box_pix"], box_amodal=b["box_amodal"],
                                 label=label, score=score, image_id=image_id)
                  for image_id, label, score, b in rows]
        dataset = JointDetectionSet(class_table=table, images=images, detections=joints)
    else:
        box_kind = "amodal"
        if rows:
            box_kind = "pixel" if next(iter(kinds_seen)) == ("box_pix",) else "amodal"
        key = "box_pix" if box_kind == "pixel" else "box_amodal"
        dets = [Detection(box=b[key], label=label, score=score, image_id=image_id)
                for image_id, label, score, b in rows]
        dataset = DetectionSet(class_table=table, images=images, detections=dets,
                               box_kind=box_kind)
    report.violations.extend(validate(dataset))
    return dataset, report


def _box_json(box: BoundingBox) -> list[float]:
    # float() coercion keeps int-constructed boxes byte-stable across a
    # write/read/write cycle
    return [float(box.x_min), float(box.y_min), float(box.x_max), float(box.y_max)]


def write_native(dataset, path: str | Path, header_extra: dict | None = None) -> None:
    """Write any of the three set types; reading the file back yields a
    field-for-field identical set (floats round-trip exactly).

    ``header_extra`` merges additional provenance keys (e.g. the generator
    config) into the header; readers ignore unknown header keys.
    """
    path = Path(path)
    header = {
        "schema_version": SCHEMA_VERSION,
        "classes": list(dataset.class_table.labels),
        "images": [{"id": im.id, "width": float(im.width), "height": float(im.height)}
                   for im in dataset.images],
        "counts": {"images": len(dataset.images), "records": len(dataset)},
    }
    if header_extra:
        for key, value in header_extra.items():
            header.setdefault(key, value)
    lines = [json.dumps(header, sort_keys=True)]
    if isinstance(dataset, GroundTruthSet):
        for o in dataset.objects:
            record = {"image_id": o.image_id, "object_id": o.object_id, "class": o.label,
                      "box_amodal": _box_json(o.box_amodal)}
            if o.box_pix is not None:
                record["box_pix"] = _box_json(o.box_pix)
            lines.append(json.dumps(record, sort_keys=True))
    elif isinstance(dataset, JointDetectionSet):
        for d in dataset.detections:
            record = {"image_id": d.image_id, "class": d.label, "score": float(d.score),
                      "box_pix": _box_json(d.box_pix), "box_amodal": _box_json(d.box_amodal)}
            lines.append(json.dumps(record, sort_keys=True))
    elif isinstance(dataset, DetectionSet):
        key = "box_pix" if dataset.box_kind == "pixel" else "box_amodal"
        for d in dataset.detections:
            record = {"image_id": d.image_id, "class": d.label, "score": float(d.score),
                      key: _box_json(d.box)}
            lines.append(json.dumps(record, sort_keys=True))
    else:
        raise TypeError(f"cannot serialize {type(dataset).__name__}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_kitti_labels(label_dir: str | Path,
                      mapping: dict[str, str] | None = None,
                      image_size: tuple[float, float] = (1242.0, 375.0)):
    """Read a directory of KITTI object-label files (one per frame).

    Only the amodal boxes exist in this layout (bbox columns 5 to 8,
    1-indexed: left, top, right, bottom); pixel boxes stay unset until
    merged from an instance-derived file. The image id is the file stem and
    the object id is the 0-based index among mapped objects of the frame.
    Unmapped type names are skipped with a per-name counter; unparseable
    lines are hard errors naming file and line.
    """
    mapping = dict(DEFAULT_KITTI_CLASS_MAP if mapping is None else mapping)
    label_dir = Path(label_dir)
    if not label_dir.is_dir():
        raise DataError(f"{label_dir}: not a directory")
    target_labels = list(dict.fromkeys(mapping.values()))
    table = ClassTable(target_labels)
    report = LoadReport()
    objects: list[GroundTruthObject] = []
    images: list[ImageInfo] = []
    width, height = float(image_size[0]), float(image_size[1])
    for label_file in sorted(label_dir.glob("*.txt")):
        image_id = label_file.stem
        images.append(ImageInfo(id=image_id, width=width, height=height))
        emitted = 0
        with label_file.open("r", encoding="utf-8") as stream:
            for line_no, line in enumerate(stream, start=1):
                line = line.strip()
                if not line:
                    continue
                fields = line.split()
                if len(fields) < 8:
                    raise DataError(f"{label_file}:{line_no}: expected >= 8 columns, "
                                    f"got {len(fields)}")
                type_name = fields[0]
                if type_name not in mapping:
                    report.counters[f"unmapped_class:{type_name}"] += 1
                    continue
                try:
                    left, top, right, bottom = (float(v) for v in fields[4:8])
                except ValueError as exc:
                    raise DataError(f"{label_file}:{line_no}: bad bbox columns: {exc}") from exc
                try:
                    box = BoundingBox(left, top, right, bottom)
                except ValueError as exc:
                    report.violations.append(Violation(
                        f"{label_file}:{line_no}", "box_amodal", f"invalid box: {exc}"))
                    report.counters["invalid_box_amodal"] += 1
                    continue
                objects.append(GroundTruthObject(
                    box_amodal=box, label=mapping[type_name], image_id=image_id,
                    object_id=str(emitted)))
                emitted += 1
    dataset = GroundTruthSet(class_table=table, images=images, objects=objects)
    return dataset, report


@dataclass
class MergeResult:
    merged: GroundTruthSet
    unmatched_amodal: list[tuple[str, str]]
    unmatched_pixel: list[tuple[str, str]]
    fallback_pairs: list[tuple[tuple[str, str], tuple[str, str], float]]
    counters: Counter


def merge_pixel_amodal(amodal_set: GroundTruthSet, pixel_set: GroundTruthSet,
                       fallback_iou_join: bool = False,
                       min_fallback_iou: float = 0.5) -> MergeResult:
    """Inner-join two partial ground-truth sets on (image_id, object_id).

    The amodal box comes from ``amodal_set`` and the pixel box from each
    partner's ``box_pix``. Unmatched records on either side are reported,
    never fatal. With ``fallback_iou_join`` the leftovers of each image are
    greedily paired by highest IoU between their available boxes (at least
    ``min_fallback_iou``), and every such pair is logged.
    """
    if not amodal_set.class_table.same_labels(pixel_set.class_table):
        raise ConfigError(
            f"class tables differ: {sorted(amodal_set.class_table.labels)} vs "
            f"{sorted(pixel_set.class_table.labels)}")

    def index(dataset: GroundTruthSet) -> dict[tuple[str, str], GroundTruthObject]:
        out: dict[tuple[str, str], GroundTruthObject] = {}
        for o in dataset.objects:
            key = (o.image_id, o.object_id)
            if key in out:
                raise DataError(f"duplicate join key {key} in ground-truth set")
            out[key] = o
        return out

    amodal_index = index(amodal_set)
    pixel_index = index(pixel_set)
    counters: Counter = Counter()
    merged_objects: list[GroundTruthObject] = []
    matched_pixel_keys: set[tuple[str, str]] = set()
    unmatched_amodal: list[tuple[str, str]] = []

    def join(a: GroundTruthObject, p: GroundTruthObject) -> GroundTruthObject:
        if p.box_pix is None:
            raise DataError(
                f"pixel-set object {p.image_id}/{p.object_id} has no box_pix")
        if p.label != a.label:
            counters["label_mismatch"] += 1
        return GroundTruthObject(box_amodal=a.box_amodal, label=a.label,
                                 image_id=a.image_id, object_id=a.object_id,
                                 box_pix=p.box_pix)

    for key, a in amodal_index.items():
        p = pixel_index.get(key)
        if p is None:
            unmatched_amodal.append(key)
            continue
        merged_objects.append(join(a, p))
        matched_pixel_keys.add(key)
    unmatched_pixel = [k for k in pixel_index if k not in matched_pixel_keys]

    fallback_pairs: list[tuple[tuple[str, str], tuple[str, str], float]] = []
    if fallback_iou_join and unmatched_amodal and unmatched_pixel:
        still_amodal: list[tuple[str, str]] = []
        free_pixel = set(unmatched_pixel)
        for a_key in unmatched_amodal:
            a = amodal_index[a_key]
            best_key = None
            best_iou = 0.0
            for p_key in sorted(free_pixel):
                p = pixel_index[p_key]
                if p.image_id != a.image_id:
                    continue
                p_box = p.box_amodal if p.box_amodal is not None else p.box_pix
                if p_box is None:
                    continue
                overlap = iou(a.box_amodal, p_box)
                if overlap > best_iou:
                    best_iou = overlap
                    best_key = p_key
            if best_key is not None and best_iou >= min_fallback_iou:
                merged_objects.append(join(a, pixel_index[best_key]))
                free_pixel.discard(best_key)
                fallback_pairs.append((a_key, best_key, best_iou))
                counters["fallback_join"] += 1
            else:
                still_amodal.append(a_key)
        unmatched_amodal = still_amodal
        unmatched_pixel = sorted(free_pixel)

    counters["unmatched_amodal"] = len(unmatched_amodal)
    counters["unmatched_pixel"] = len(unmatched_pixel)

    image_index: dict[str, ImageInfo] = {}
    for im in list(amodal_set.images) + list(pixel_set.images):
        if im.id not in image_index:
            image_index[im.id] = im
        elif (im.width, im.height) != (image_index[im.id].width, image_index[im.id].height):
            counters["image_dim_conflict"] += 1
    merged_objects.sort(key=lambda o: (o.image_id, o.object_id))
    merged = GroundTruthSet(class_table=amodal_set.class_table,
                            images=list(image_index.values()),
                            objects=merged_objects)
    return MergeResult(merged=merged, unmatched_amodal=sorted(unmatched_amodal),
                       unmatched_pixel=sorted(unmatched_pixel),
                       fallback_pairs=fallback_pairs, counters=counters)
