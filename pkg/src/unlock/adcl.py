"""Amodal object pool and spatial-aware mixing."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .core import UNCERTAIN, area, bbox, match_by_overlap, union
from .errors import DimensionMismatch
from .opll import (
    InstancePrediction,
    OmniPseudoLabel,
    compute_cs_thresholds,
    gate_predictions,
    compute_thing_mask,
    instance_stats,
    select_certain_objects,
)
from .rng import SplitMix64

KEPT = "kept"
REMOVED = "removed_fully_occluded"


@dataclass(frozen=True, eq=False)
class PoolObject:
    cls: int
    score: float
    full_mask: np.ndarray
    overlap_mask: np.ndarray
    # crop of the source image over bbox(full_mask); zero outside full_mask
    pixels: np.ndarray
    offset: tuple[int, int]
    source_image_id: str

    @property
    def shape(self):
        return self.full_mask.shape

    def paste_pixels(self, channels):
        """Source pixels expanded to the full frame (zeros outside the crop)."""
        out = np.zeros(self.shape + ((channels,) if channels > 1 else ()), dtype=np.uint8)
        y0, x0 = self.offset
        h, w = self.pixels.shape[:2]
        out[y0:y0 + h, x0:x0 + w] = self.pixels.reshape(out[y0:y0 + h, x0:x0 + w].shape)
        return out


@dataclass(eq=False)
class ObjectPool:
    objects: list[PoolObject] = field(default_factory=list)

    def __len__(self):
        return len(self.objects)

    def __getitem__(self, i):
        return self.objects[i]

    def histogram(self):
        return dict(sorted(Counter(o.cls for o in self.objects).items()))


@dataclass(eq=False)
class MixedSample:
    image: np.ndarray
    labels: OmniPseudoLabel
    paste_log: list[tuple[int, str]]


def admit_object(candidate: InstancePrediction, others, image, source_image_id="") -> PoolObject | None:
    """Record the overlap with the other objects of the same image and apply
    the half-area rule. ``others`` are the full masks of every other object."""
    full = candidate.mask
    overlap = full & union(others, full.shape)
    if not 2 * area(overlap) < area(full):
        return None
    y0, x0, y1, x1 = bbox(full)
    img = np.asarray(image, dtype=np.uint8)
    if img.shape[:2] != full.shape:
        raise DimensionMismatch(f"image {img.shape[:2]} vs mask {full.shape}")
    crop = img[y0:y1, x0:x1].copy()
    crop[~full[y0:y1, x0:x1]] = 0
    return PoolObject(candidate.cls, candidate.score, full, overlap, crop, (y0, x0), source_image_id)


def image_candidates(preds, things):
    thing_mask = compute_thing_mask(preds.semantic, things)
    return gate_predictions(preds.amodal, thing_mask)


def build_object_pool(dataset, strict=(0.95, 0.1), capacity=2048, things=(), mapper=map) -> ObjectPool:
    """Admit strictly-selected amodal objects into a pool of at most
    ``capacity`` entries (highest scores kept, dataset order preserved)."""
    if capacity < 0:
        raise ValueError("capacity must be >= 0")
    gated = list(mapper(lambda p: image_candidates(p, things), dataset))
    stats = instance_stats([o for objs in gated for o in objs])
    th = compute_cs_thresholds(stats, *strict, classes=things, branch="amodal")

    def admit_image(args):
        preds, objs = args
        if objs and preds.image is None:
            raise ValueError(f"image {preds.image_id}: pool building needs source pixels")
        admitted = []
        for obj in select_certain_objects(objs, th, "amodal"):
            others = [o.mask for o in objs if o is not obj]
            po = admit_object(obj, others, preds.image, preds.image_id)
            if po is not None:
                admitted.append(po)
        return admitted

    admitted = [po for part in mapper(admit_image, list(zip(dataset, gated))) for po in part]
    if len(admitted) > capacity:
        order = sorted(range(len(admitted)), key=lambda i: (-admitted[i].score, i))
        keep = sorted(order[:capacity])
        admitted = [admitted[i] for i in keep]
    return ObjectPool(admitted)


def spatial_aware_mix(image, labels: OmniPseudoLabel, pool: ObjectPool, r: int, seed: int) -> MixedSample:
    img = np.array(image, dtype=np.uint8, copy=True)
    shape = img.shape[:2]
    channels = 1 if img.ndim == 2 else img.shape[2]
    for o in pool.objects:
        if o.shape != shape:
            raise DimensionMismatch(f"pool object {o.shape} vs base image {shape}")
    if labels.semantic.shape != shape:
        raise DimensionMismatch(f"labels {labels.semantic.shape} vs base image {shape}")

    picks = SplitMix64(seed).sample(len(pool), r)
    objs = [pool[i] for i in picks]

    # visible part of each paste: later pastes sit in front
    covered_after = np.zeros(shape, dtype=bool)
    visible = [None] * len(objs)
    for i in range(len(objs) - 1, -1, -1):
        visible[i] = objs[i].full_mask & ~covered_after
        covered_after |= objs[i].full_mask
    kept = [i for i in range(len(objs)) if visible[i].any()]
    log = [(picks[i], KEPT if visible[i].any() else REMOVED) for i in range(len(objs))]

    sem = labels.semantic.copy()
    for i in kept:
        o = objs[i]
        src = o.paste_pixels(channels)
        img[o.full_mask] = src[o.full_mask]
        img[o.overlap_mask] = 0
        sem[o.full_mask & ~o.overlap_mask] = o.cls
        sem[o.full_mask & o.overlap_mask] = UNCERTAIN

    pasted = union([objs[i].full_mask for i in kept], shape)

    def occluded(mask):
        return not (mask & ~pasted).any()

    removed_inst = {k for k, p in enumerate(labels.instance) if occluded(p.mask)}
    pairs = match_by_overlap([(p.cls, p.mask) for p in labels.amodal],
                             [(p.cls, p.mask) for p in labels.instance])
    removed_amod = set()
    for k, p in enumerate(labels.amodal):
        j = pairs.get(k)
        if (j in removed_inst) if j is not None else occluded(p.mask):
            removed_amod.add(k)

    base_seq = max((p.seq for p in labels.instance + labels.amodal), default=-1) + 1
    new_inst = [p for k, p in enumerate(labels.instance) if k not in removed_inst]
    new_amod = [p for k, p in enumerate(labels.amodal) if k not in removed_amod]
    for n, i in enumerate(kept):
        o = objs[i]
        new_amod.append(InstancePrediction(o.cls, o.score, o.full_mask, base_seq + n))
        new_inst.append(InstancePrediction(o.cls, o.score, visible[i], base_seq + n))

    mixed = OmniPseudoLabel(
        instance=new_inst,
        instance_uncertain=labels.instance_uncertain & ~pasted,
        amodal=new_amod,
        amodal_uncertain=labels.amodal_uncertain & ~pasted,
        semantic=sem,
    )
    return MixedSample(img, mixed, log)
