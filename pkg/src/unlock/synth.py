"""Synthetic scenes with exact amodal ground truth, and a noisy stand-in
for the source model's predictions on them.

Scenes are a banded stuff background (sky / building / road) with thing
objects drawn back to front as filled rectangles or ellipses, so every
amodal mask is known analytically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import ClassTable, iou
from .errors import ConfigInvalid
from .fusion import PanopticMap, Segment
from .opll import ImagePredictions, InstancePrediction

DEFAULT_CLASSES = ClassTable(
    ("road", "building", "sky", "vegetation", "car", "pedestrian", "cyclist"),
    frozenset({4, 5, 6}),
)
# cyclist is the deliberately rare, low-confidence class
RARE_CLASS = 6

PALETTE = np.array([
    [128, 64, 128],
    [70, 70, 70],
    [70, 130, 180],
    [107, 142, 35],
    [0, 0, 142],
    [220, 20, 60],
    [255, 0, 0],
], dtype=np.int64)


@dataclass(frozen=True)
class SceneConfig:
    height: int = 48
    width: int = 96
    min_objects: int = 2
    max_objects: int = 6
    classes: ClassTable = DEFAULT_CLASSES
    shapes: tuple[str, ...] = ("rect", "ellipse")
    rare_class: int | None = RARE_CLASS
    rare_prob: float = 0.1
    # this many of the frontmost objects are forced to the rare class
    min_rare: int = 0
    min_size: int = 4

    def validate(self):
        if self.height < 8 or self.width < 8:
            raise ConfigInvalid("scene height and width must be >= 8")
        if not 0 <= self.min_objects <= self.max_objects:
            raise ConfigInvalid("object count range must satisfy 0 <= min <= max")
        if not self.classes.things:
            raise ConfigInvalid("class table has no thing classes")
        if not self.classes.stuff:
            raise ConfigInvalid("class table has no stuff classes")
        if not self.shapes or set(self.shapes) - {"rect", "ellipse"}:
            raise ConfigInvalid(f"shape kinds must be rect/ellipse, got {self.shapes}")
        if self.rare_class is not None and self.rare_class not in self.classes.things:
            raise ConfigInvalid("rare class must be a thing class")
        if self.min_rare > self.min_objects:
            raise ConfigInvalid("min_rare exceeds min_objects")
        if self.min_rare and self.rare_class is None:
            raise ConfigInvalid("min_rare needs a rare class")
        if not 1 <= self.min_size <= min(self.height, self.width) // 2:
            raise ConfigInvalid("min_size out of range for the frame")


@dataclass(eq=False)
class GtObject:
    cls: int
    amodal: np.ndarray
    visible: np.ndarray
    depth: int  # 0 = frontmost


@dataclass(eq=False)
class SyntheticScene:
    image: np.ndarray
    objects: list[GtObject]
    semantic: np.ndarray
    classes: ClassTable

    def panoptic(self) -> PanopticMap:
        return gt_panoptic(self.semantic, self.objects)


def gt_panoptic(sem, objects) -> PanopticMap:
    seg = np.zeros(sem.shape, dtype=np.int64)
    segments = {}
    for k, o in enumerate(objects, start=1):
        seg[o.visible] = k
        segments[k] = Segment(o.cls, o.visible, 1.0, o.amodal)
    return PanopticMap(sem.astype(np.int64), seg, segments)


def shape_mask(kind, y0, x0, h, w, height, width):
    mask = np.zeros((height, width), dtype=bool)
    if kind == "rect":
        mask[y0:y0 + h, x0:x0 + w] = True
        return mask
    yy, xx = np.mgrid[y0:y0 + h, x0:x0 + w]
    cy, cx = y0 + h / 2, x0 + w / 2
    inside = ((yy + 0.5 - cy) / (h / 2)) ** 2 + ((xx + 0.5 - cx) / (w / 2)) ** 2 <= 1.0
    mask[y0:y0 + h, x0:x0 + w] = inside
    return mask


def stuff_layout(rng, height, width, classes):
    """Horizontal bands: sky on top, buildings / vegetation in the middle,
    road at the bottom (whichever of those the class table has)."""
    names = classes.names
    stuff = sorted(classes.stuff)
    order = [names.index(n) for n in ("sky", "building", "vegetation", "road") if n in names and names.index(n) in stuff]
    order += [c for c in stuff if c not in order]
    cuts = np.sort(rng.integers(1, height, size=len(order) - 1))
    sem = np.empty((height, width), dtype=np.uint8)
    bounds = [0, *cuts.tolist(), height]
    for c, a, b in zip(order, bounds[:-1], bounds[1:]):
        sem[a:b] = c
    return sem


def generate_scene(seed, config: SceneConfig = SceneConfig()) -> SyntheticScene:
    config.validate()
    rng = np.random.default_rng(seed)
    H, W = config.height, config.width
    classes = config.classes
    sem = stuff_layout(rng, H, W, classes)
    palette = PALETTE[np.arange(classes.num_classes) % len(PALETTE)]
    image = palette[sem] + rng.integers(-12, 13, size=(H, W, 3))

    n = int(rng.integers(config.min_objects, config.max_objects + 1))
    common = sorted(classes.things - ({config.rare_class} if config.rare_class is not None else set()))
    drawn = []  # back to front
    for k in range(n):
        forced = k >= n - config.min_rare
        if config.rare_class is not None and (forced or not common or rng.random() < config.rare_prob):
            cls = config.rare_class
        else:
            cls = int(rng.choice(common))
        kind = str(rng.choice(config.shapes))
        h = int(rng.integers(config.min_size, max(config.min_size, H // 2) + 1))
        w = int(rng.integers(config.min_size, max(config.min_size, W // 3) + 1))
        y0 = int(rng.integers(0, H - h + 1))
        x0 = int(rng.integers(0, W - w + 1))
        color = np.clip(palette[cls] + rng.integers(-30, 31, size=3), 0, 255)
        drawn.append((cls, shape_mask(kind, y0, x0, h, w, H, W), color))

    # front to back; fully occluded objects are discarded
    kept = []
    in_front = np.zeros((H, W), dtype=bool)
    for cls, amodal, color in reversed(drawn):
        visible = amodal & ~in_front
        in_front |= amodal
        if visible.any():
            kept.append((GtObject(cls, amodal, visible, len(kept)), color))
    kept.reverse()
    for o, color in kept:
        image[o.visible] = color
        sem[o.visible] = o.cls
    objects = [o for o, _ in kept]
    return SyntheticScene(np.clip(image, 0, 255).astype(np.uint8), objects, sem, classes)


@dataclass(frozen=True)
class NoiseModel:
    erode: int = 0
    dilate: int = 0
    score_noise: float = 0.0
    spurious_rate: float = 0.0
    miss_rate: float = 0.0
    semantic_flip: float = 0.0
    softness: float = 0.0
    # score = clamp(scale[cls] * IoU + eta, 0, 1); unlisted classes use 1.0
    class_score_scale: dict = field(default_factory=dict)

    def validate(self):
        for name in ("erode", "dilate", "score_noise", "spurious_rate", "miss_rate", "semantic_flip", "softness"):
            if getattr(self, name) < 0:
                raise ConfigInvalid(f"noise parameter {name} must be >= 0")
        if self.miss_rate > 1 or self.semantic_flip > 1 or self.softness > 1:
            raise ConfigInvalid("rates must be <= 1")


ZERO_NOISE = NoiseModel()


def perturb_mask(mask, erode, dilate):
    out = mask
    square = np.ones((3, 3), dtype=bool)
    if erode:
        out = ndimage.binary_erosion(out, structure=square, iterations=erode, border_value=0)
    if dilate:
        out = ndimage.binary_dilation(out, structure=square, iterations=dilate)
    return out


def _score(rng, noise, cls, quality):
    scale = noise.class_score_scale.get(cls, 1.0)
    eta = rng.uniform(-noise.score_noise, noise.score_noise) if noise.score_noise else 0.0
    return float(np.clip(scale * quality + eta, 0.0, 1.0))


def simulate_branch(rng, scene, noise, amodal):
    H, W = scene.semantic.shape
    preds = []
    for o in scene.objects:
        if noise.miss_rate and rng.random() < noise.miss_rate:
            continue
        gt = o.amodal if amodal else o.visible
        mask = perturb_mask(gt, noise.erode, noise.dilate)
        if not mask.any():
            continue
        preds.append(InstancePrediction(o.cls, _score(rng, noise, o.cls, iou(mask, gt)), mask))
    things = sorted(scene.classes.things)
    for _ in range(int(rng.poisson(noise.spurious_rate)) if noise.spurious_rate else 0):
        cls = int(rng.choice(things))
        h = int(rng.integers(2, max(3, H // 3)))
        w = int(rng.integers(2, max(3, W // 4)))
        y0, x0 = int(rng.integers(0, H - h + 1)), int(rng.integers(0, W - w + 1))
        mask = shape_mask("rect", y0, x0, h, w, H, W)
        quality = max((iou(mask, o.amodal if amodal else o.visible) for o in scene.objects if o.cls == cls), default=0.0)
        preds.append(InstancePrediction(cls, _score(rng, noise, cls, quality), mask))
    return preds


def simulate_predictions(scene: SyntheticScene, noise: NoiseModel = ZERO_NOISE, seed=0, image_id="") -> ImagePredictions:
    noise.validate()
    rng = np.random.default_rng(seed)
    C = scene.classes.num_classes
    corrupted = scene.semantic.astype(np.int64)
    if noise.semantic_flip:
        flip = rng.random(corrupted.shape) < noise.semantic_flip
        corrupted = np.where(flip, rng.integers(0, C, size=corrupted.shape), corrupted)
    probs = np.full(corrupted.shape + (C,), noise.softness / C)
    np.put_along_axis(probs, corrupted[..., None], 1.0 - noise.softness + noise.softness / C, axis=2)
    instance = simulate_branch(rng, scene, noise, amodal=False)
    amodal = simulate_branch(rng, scene, noise, amodal=True)
    return ImagePredictions(image_id, probs, instance, amodal, scene.image)


def scene_seed(seed, index):
    return np.random.SeedSequence([int(seed), int(index)])


def generate_dataset(seed, count, config: SceneConfig = SceneConfig(), noise: NoiseModel = ZERO_NOISE):
    """``count`` (scene, predictions) pairs with object seqs assigned."""
    scenes, preds = [], []
    for i in range(count):
        ss = scene_seed(seed, i)
        scene_ss, pred_ss = ss.spawn(2)
        scene = generate_scene(scene_ss, config)
        scenes.append(scene)
        preds.append(simulate_predictions(scene, noise, pred_ss, image_id=f"img{i:04d}"))
    assign_seqs(preds)
    return scenes, preds


def assign_seqs(dataset):
    """Number objects per branch in dataset order (stable dataset ordinal)."""
    for branch in ("instance", "amodal"):
        n = 0
        for p in dataset:
            renumbered = []
            for q in getattr(p, branch):
                renumbered.append(InstancePrediction(q.cls, q.score, q.mask, n))
                n += 1
            setattr(p, branch, renumbered)
    return dataset
