"""Deterministic generator of crowded occluded scenes plus a simulated
noisy detector, so end-to-end claims can be exercised without real data.

Scenes are opaque axis-aligned rectangles placed in depth order (later
placement = nearer to the camera). The amodal box of an object is its full
rectangle; the pixel-based box is the exact bounding box of whatever part
the nearer rectangles leave visible. Everything is a pure function of
(config, seed): per-image RNG streams are derived from (seed, image index),
so parallel generation cannot change the output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .data import (
    ClassTable,
    GroundTruthObject,
    GroundTruthSet,
    ImageInfo,
    JointDetection,
    JointDetectionSet,
)
from .errors import ConfigError, GenerationError
from .geometry import BoundingBox, area
from .parallel import parallel_map

__all__ = [
    "SceneConfig",
    "DetectorNoiseConfig",
    "GeneratorSpec",
    "load_generator_spec",
    "visible_region_bbox",
    "generate_corpus",
    "simulate_detector",
]

# Entropy tags keep the generator and detector RNG streams distinct even
# when the user supplies the same seed for both.
_SCENE_TAG = 0x5CE17E
_DETECTOR_TAG = 0xDE7EC7


@dataclass(frozen=True)
class SceneConfig:
    """Scene layout parameters. ``seed`` is mandatory: there is no ambient
    randomness anywhere in the generator."""

    seed: int
    image_width: float = 1280.0
    image_height: float = 720.0
    objects_per_image_mean: float = 7.0
    object_width_range: tuple[float, float] = (90.0, 260.0)
    object_height_range: tuple[float, float] = (70.0, 200.0)
    occlusion_rate: float = 0.6
    class_mix: dict[str, float] = field(
        default_factory=lambda: {"car_van": 0.6, "truck_bus": 0.2, "pedestrian": 0.2})
    max_place_retries: int = 200

    def __post_init__(self) -> None:
        if self.image_width <= 0 or self.image_height <= 0:
            raise ConfigError("image dimensions must be positive")
        if self.objects_per_image_mean <= 0:
            raise ConfigError(
                f"objects_per_image_mean must be positive, got {self.objects_per_image_mean}")
        for name, (lo, hi) in (("object_width_range", self.object_width_range),
                               ("object_height_range", self.object_height_range)):
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        if self.object_width_range[1] > self.image_width or \
                self.object_height_range[1] > self.image_height:
            raise ConfigError("object size range exceeds the image dimensions")
        if not (0.0 <= self.occlusion_rate <= 1.0):
            raise ConfigError(
                f"occlusion_rate must lie in [0, 1], got {self.occlusion_rate}")
        if not self.class_mix or any(w <= 0 for w in self.class_mix.values()):
            raise ConfigError("class_mix needs at least one label with positive weight")
        if self.max_place_retries < 1:
            raise ConfigError("max_place_retries must be >= 1")


@dataclass(frozen=True)
class DetectorNoiseConfig:
    """Noise model standing in for a trained detector.

    Every non-missed object fires 1 + Poisson(extra_duplicates_mean) joint
    detections with independently jittered boxes; the confidence is
    base - penalty * occluded_fraction + gaussian noise, clamped to [0, 1].
    """

    jitter_px: float = 2.0
    extra_duplicates_mean: float = 2.5
    miss_rate: float = 0.03
    fp_rate: float = 0.3
    score_base: float = 0.9
    occlusion_penalty: float = 0.3
    score_noise: float = 0.05

    def __post_init__(self) -> None:
        if self.jitter_px < 0:
            raise ConfigError(f"jitter_px must be >= 0, got {self.jitter_px}")
        if self.extra_duplicates_mean < 0:
            raise ConfigError("extra_duplicates_mean must be >= 0")
        for name, value in (("miss_rate", self.miss_rate), ("fp_rate", self.fp_rate)):
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if not (0.0 <= self.score_base <= 1.0):
            raise ConfigError(f"score_base must lie in [0, 1], got {self.score_base}")
        if self.occlusion_penalty < 0 or self.score_noise < 0:
            raise ConfigError("occlusion_penalty and score_noise must be >= 0")


@dataclass(frozen=True)
class GeneratorSpec:
    """A full declarative generation run: scene config, image count, and an
    optional detector section (with its own seed)."""

    scene: SceneConfig
    n_images: int
    detector: DetectorNoiseConfig | None = None
    detector_seed: int | None = None


_SCENE_KEYS = {"seed", "n_images", "image_width", "image_height",
               "objects_per_image_mean", "object_width_range",
               "object_height_range", "occlusion_rate", "class_mix",
               "max_place_retries", "detector"}
_DETECTOR_KEYS = {"seed", "jitter_px", "extra_duplicates_mean", "miss_rate",
                  "fp_rate", "score_base", "occlusion_penalty", "score_noise"}


def load_generator_spec(config: dict) -> GeneratorSpec:
    """Parse a declarative config dict (the documented key set); unknown
    keys raise ConfigError naming the key."""
    unknown = set(config) - _SCENE_KEYS
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
    if "seed" not in config:
        raise ConfigError("config requires a seed")
    n_images = int(config.get("n_images", 50))
    if n_images < 1:
        raise ConfigError(f"n_images must be >= 1, got {n_images}")
    scene_kwargs = {}
    for key in _SCENE_KEYS - {"n_images", "detector"}:
        if key in config:
            value = config[key]
            if key.endswith("_range"):
                value = (float(value[0]), float(value[1]))
            scene_kwargs[key] = value
    scene = SceneConfig(**scene_kwargs)
    detector = None
    detector_seed = None
    if "detector" in config:
        det_dict = dict(config["detector"])
        unknown = set(det_dict) - _DETECTOR_KEYS
        if unknown:
            raise ConfigError(f"unknown detector config key(s): {sorted(unknown)}")
        detector_seed = int(det_dict.pop("seed", scene.seed))
        detector = DetectorNoiseConfig(**det_dict)
    return GeneratorSpec(scene=scene, n_images=n_images, detector=detector,
                         detector_seed=detector_seed)


def _subtract_intervals(lo: float, hi: float,
                        blocks: list[tuple[float, float]]) -> list[tuple[float, float]]:
    """[lo, hi] minus the union of blocks, as a list of intervals."""
    free = [(lo, hi)]
    for b_lo, b_hi in blocks:
        next_free = []
        for f_lo, f_hi in free:
            if b_hi <= f_lo or b_lo >= f_hi:
                next_free.append((f_lo, f_hi))
                continue
            if b_lo > f_lo:
                next_free.append((f_lo, b_lo))
            if b_hi < f_hi:
                next_free.append((b_hi, f_hi))
        free = next_free
        if not free:
            break
    return free


def visible_region_bbox(rect: BoundingBox,
                        occluders: Sequence[BoundingBox]) -> BoundingBox | None:
    """Exact bounding box of ``rect`` minus the union of the occluders.

    The visible region of a rectangle under finitely many occluding
    rectangles is a union of rectangles, so its bounding box is computed
    exactly with a vertical strip sweep: inside one strip (delimited by the
    occluder x-edges) coverage is purely an interval union in y. Returns
    None when nothing remains visible.
    """
    clipped = []
    for occ in occluders:
        x0 = max(rect.x_min, occ.x_min)
        x1 = min(rect.x_max, occ.x_max)
        y0 = max(rect.y_min, occ.y_min)
        y1 = min(rect.y_max, occ.y_max)
        if x1 > x0 and y1 > y0:
            clipped.append((x0, y0, x1, y1))
    if not clipped:
        return rect
    xs = sorted({rect.x_min, rect.x_max, *(c[0] for c in clipped), *(c[2] for c in clipped)})
    min_x = min_y = float("inf")
    max_x = max_y = float("-inf")
    visible = False
    for s_lo, s_hi in zip(xs, xs[1:]):
        if s_hi <= s_lo:
            continue
        blocks = [(c[1], c[3]) for c in clipped if c[0] <= s_lo and c[2] >= s_hi]
        free = _subtract_intervals(rect.y_min, rect.y_max, blocks)
        free = [(lo, hi) for lo, hi in free if hi > lo]
        if not free:
            continue
        visible = True
        min_x = min(min_x, s_lo)
        max_x = max(max_x, s_hi)
        min_y = min(min_y, min(lo for lo, _ in free))
        max_y = max(max_y, max(hi for _, hi in free))
    if not visible:
        return None
    return BoundingBox(min_x, min_y, max_x, max_y)


def _centered_box(cx: float, cy: float, w: float, h: float,
                  width: float, height: float) -> BoundingBox:
    cx = min(max(cx, w / 2.0), width - w / 2.0)
    cy = min(max(cy, h / 2.0), height - h / 2.0)
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def _disjoint(box: BoundingBox, others: Iterable[BoundingBox]) -> bool:
    for o in others:
        if (min(box.x_max, o.x_max) > max(box.x_min, o.x_min)
                and min(box.y_max, o.y_max) > max(box.y_min, o.y_min)):
            return False
    return True


def _place_disjoint(rng: np.random.Generator, cfg: SceneConfig,
                    placed: list[BoundingBox]) -> BoundingBox:
    for _ in range(cfg.max_place_retries):
        w = rng.uniform(*cfg.object_width_range)
        h = rng.uniform(*cfg.object_height_range)
        cx = rng.uniform(w / 2.0, cfg.image_width - w / 2.0)
        cy = rng.uniform(h / 2.0, cfg.image_height - h / 2.0)
        box = _centered_box(cx, cy, w, h, cfg.image_width, cfg.image_height)
        if _disjoint(box, placed):
            return box
    raise GenerationError(
        "could not place a non-overlapping object after "
        f"{cfg.max_place_retries} retries; occlusion_rate={cfg.occlusion_rate} "
        "with this object density is unreachable")


def _place_overlapping(rng: np.random.Generator, cfg: SceneConfig,
                       placed: list[BoundingBox]) -> BoundingBox:
    anchor = placed[int(rng.integers(len(placed)))]
    w = rng.uniform(*cfg.object_width_range)
    h = rng.uniform(*cfg.object_height_range)
    sign_x = -1.0 if rng.random() < 0.5 else 1.0
    sign_y = -1.0 if rng.random() < 0.5 else 1.0
    dx = sign_x * rng.uniform(0.1, 0.7) * (anchor.width + w) / 2.0
    dy = sign_y * rng.uniform(0.0, 0.3) * (anchor.height + h) / 2.0
    cx = (anchor.x_min + anchor.x_max) / 2.0 + dx
    cy = (anchor.y_min + anchor.y_max) / 2.0 + dy
    return _centered_box(cx, cy, w, h, cfg.image_width, cfg.image_height)


def _generate_image(cfg: SceneConfig, image_index: int) -> list[GroundTruthObject]:
    rng = np.random.default_rng([_SCENE_TAG, cfg.seed, image_index])
    image_id = f"synth_{image_index:06d}"
    n_objects = int(rng.poisson(cfg.objects_per_image_mean))
    labels = list(cfg.class_mix)
    weights = np.array([cfg.class_mix[label] for label in labels], dtype=np.float64)
    weights /= weights.sum()

    rects: list[BoundingBox] = []
    for _ in range(n_objects):
        if rects and rng.random() < cfg.occlusion_rate:
            rects.append(_place_overlapping(rng, cfg, rects))
        else:
            rects.append(_place_disjoint(rng, cfg, rects))

    # Later-placed rectangles are nearer; an object fully hidden by them is
    # dropped and replaced by a fresh disjoint (hence fully visible) one.
    for _ in range(max(1, len(rects))):
        hidden = None
        visible_boxes: list[BoundingBox | None] = []
        for i, rect in enumerate(rects):
            vis = visible_region_bbox(rect, rects[i + 1:])
            visible_boxes.append(vis)
            if vis is None and hidden is None:
                hidden = i
        if hidden is None:
            break
        del rects[hidden]
        rects.append(_place_disjoint(rng, cfg, rects))
    else:
        raise GenerationError(
            f"image {image_id}: fully occluded objects persisted after "
            f"regeneration; lower occlusion_rate={cfg.occlusion_rate}")

    objects = []
    for k, (rect, vis) in enumerate(zip(rects, visible_boxes)):
        label = labels[int(rng.choice(len(labels), p=weights))]
        objects.append(GroundTruthObject(
            box_amodal=rect, label=label, image_id=image_id,
            object_id=str(k), box_pix=vis))
    return objects


def generate_corpus(cfg: SceneConfig, n_images: int, threads: int = 1) -> GroundTruthSet:
    """Generate ``n_images`` occluded scenes; fully deterministic given
    (cfg, n_images). Pixel boxes are exact visible-region bounding boxes,
    so box_pix is always contained in box_amodal."""
    if n_images < 0:
        raise ConfigError(f"n_images must be >= 0, got {n_images}")
    per_image = parallel_map(lambda i: _generate_image(cfg, i), list(range(n_images)), threads)
    images = [ImageInfo(id=f"synth_{i:06d}", width=cfg.image_width, height=cfg.image_height)
              for i in range(n_images)]
    objects = [obj for group in per_image for obj in group]
    return GroundTruthSet(class_table=ClassTable(list(cfg.class_mix)), images=images,
                          objects=objects)


def _jitter_box(box: BoundingBox, rng: np.random.Generator, jitter: float) -> BoundingBox:
    if jitter == 0.0:
        return box
    cx = (box.x_min + box.x_max) / 2.0 + rng.normal(0.0, jitter)
    cy = (box.y_min + box.y_max) / 2.0 + rng.normal(0.0, jitter)
    w = max(1e-3, box.width + rng.normal(0.0, jitter))
    h = max(1e-3, box.height + rng.normal(0.0, jitter))
    return BoundingBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


def _occluded_fraction(obj: GroundTruthObject) -> float:
    # Depth order is not part of a ground-truth set, so the score model uses
    # the area deficit of the pixel box as the occlusion proxy.
    full = area(obj.box_amodal)
    if full <= 0.0 or obj.box_pix is None:
        return 0.0
    return float(min(1.0, max(0.0, 1.0 - area(obj.box_pix) / full)))


def simulate_detector(gt: GroundTruthSet, cfg: DetectorNoiseConfig,
                      seed: int, threads: int = 1) -> JointDetectionSet:
    """Emit jittered joint detections for a ground-truth corpus.

    Per non-missed object: 1 + Poisson(extra_duplicates_mean) duplicates,
    each with independently jittered pixel and amodal boxes and its own
    clamped confidence. Each image may additionally gain one background
    false positive with probability fp_rate. Deterministic given seed.
    """
    labels = sorted(gt.class_table.labels)
    by_image = gt.by_image()
    image_list = list(gt.images)

    def simulate_image(item: tuple[int, ImageInfo]) -> list[JointDetection]:
        image_index, info = item
        rng = np.random.default_rng([_DETECTOR_TAG, seed, image_index])
        out: list[JointDetection] = []
        for obj in by_image.get(info.id, []):
            if obj.box_pix is None:
                raise ConfigError(
                    f"object {obj.image_id}/{obj.object_id} lacks a pixel box; "
                    "simulate_detector needs complete ground truth")
            if rng.random() < cfg.miss_rate:
                continue
            n_dets = 1 + int(rng.poisson(cfg.extra_duplicates_mean))
            occ = _occluded_fraction(obj)
            for _ in range(n_dets):
                box_pix = _jitter_box(obj.box_pix, rng, cfg.jitter_px)
                box_amodal = _jitter_box(obj.box_amodal, rng, cfg.jitter_px)
                score = cfg.score_base - cfg.occlusion_penalty * occ \
                    + rng.normal(0.0, cfg.score_noise)
                score = float(min(1.0, max(0.0, score)))
                out.append(JointDetection(box_pix=box_pix, box_amodal=box_amodal,
                                          label=obj.label, score=score,
                                          image_id=info.id))
        if rng.random() < cfg.fp_rate:
            w = rng.uniform(20.0, max(21.0, 0.2 * info.width))
            h = rng.uniform(20.0, max(21.0, 0.2 * info.height))
            cx = rng.uniform(w / 2.0, info.width - w / 2.0)
            cy = rng.uniform(h / 2.0, info.height - h / 2.0)
            box = BoundingBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
            label = labels[int(rng.integers(len(labels)))]
            score = float(rng.uniform(0.05, 0.5))
            out.append(JointDetection(box_pix=box, box_amodal=box, label=label,
                                      score=score, image_id=info.id))
        return out

    per_image = parallel_map(simulate_image, list(enumerate(image_list)), threads)
    detections = [d for group in per_image for d in group]
    return JointDetectionSet(class_table=gt.class_table, images=list(gt.images),
                             detections=detections)
