"""Combine semantic, instance and amodal instance outputs into the five
segmentation products: semantic map, instance list, amodal instance list,
panoptic map and amodal panoptic map.

Panoptic fusion paints instances in descending score order; each instance
only claims pixels nobody claimed before it and is dropped if nothing is
left. Unclaimed pixels take the semantic argmax. Thing pixels that no
instance claimed keep their class but get no segment id.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import match_by_overlap
from .errors import DimensionMismatch
from .opll import InstancePrediction


@dataclass(eq=False)
class Segment:
    cls: int
    visible: np.ndarray
    score: float = 1.0
    amodal: np.ndarray | None = None


@dataclass(eq=False)
class PanopticMap:
    class_map: np.ndarray
    segment_map: np.ndarray  # 0 = no segment
    segments: dict[int, Segment] = field(default_factory=dict)

    @property
    def shape(self):
        return self.class_map.shape

    def with_amodal(self, amodal_masks) -> "PanopticMap":
        segs = {sid: Segment(s.cls, s.visible, s.score, amodal_masks[sid]) for sid, s in self.segments.items()}
        return PanopticMap(self.class_map, self.segment_map, segs)


@dataclass(eq=False)
class FusionResult:
    semantic: np.ndarray
    instances: list[InstancePrediction]
    amodal_instances: list[InstancePrediction]
    panoptic: PanopticMap
    amodal_panoptic: PanopticMap


def paint_panoptic(sem, instances) -> PanopticMap:
    labels = np.argmax(sem, axis=2).astype(np.int64)
    shape = labels.shape
    seg_map = np.zeros(shape, dtype=np.int64)
    claimed = np.zeros(shape, dtype=bool)
    segments = {}
    next_id = 1
    for p in sorted(instances, key=lambda p: (-p.score, p.seq)):
        if p.mask.shape != shape:
            raise DimensionMismatch(f"instance {p.mask.shape} vs semantic {shape}")
        own = p.mask & ~claimed
        if not own.any():
            continue
        claimed |= own
        seg_map[own] = next_id
        labels[own] = p.cls
        segments[next_id] = Segment(p.cls, own, p.score)
        next_id += 1
    return PanopticMap(labels, seg_map, segments)


def attach_amodal(panoptic: PanopticMap, amodal) -> PanopticMap:
    """Give every segment an amodal mask: the best-overlapping amodal
    prediction of the same class (joined with the visible mask so that
    visible stays inside amodal), or the visible mask itself."""
    ids = sorted(panoptic.segments)
    segs = [panoptic.segments[i] for i in ids]
    pairs = match_by_overlap([(s.cls, s.visible) for s in segs], [(a.cls, a.mask) for a in amodal])
    masks = {}
    for k, sid in enumerate(ids):
        vis = segs[k].visible
        masks[sid] = vis | amodal[pairs[k]].mask if k in pairs else vis.copy()
    return panoptic.with_amodal(masks)


def fuse_outputs(sem, instances, amodal, confidence_floor=0.5) -> FusionResult:
    sem = np.asarray(sem)
    if sem.ndim != 3:
        raise DimensionMismatch(f"semantic prediction must be (H, W, C), got {sem.shape}")
    if not 0.0 <= confidence_floor <= 1.0:
        raise ValueError("confidence_floor must lie in [0, 1]")
    shape = sem.shape[:2]
    for p in list(instances) + list(amodal):
        if p.mask.shape != shape:
            raise DimensionMismatch(f"instance {p.mask.shape} vs semantic {shape}")
    inst = [p for p in instances if p.score >= confidence_floor]
    amod = [p for p in amodal if p.score >= confidence_floor]
    panoptic = paint_panoptic(sem, inst)
    amodal_panoptic = attach_amodal(panoptic, amod)
    return FusionResult(panoptic.class_map.copy(), inst, amod, panoptic, amodal_panoptic)


def segments_as_instances(panoptic: PanopticMap):
    return [InstancePrediction(s.cls, s.score, s.visible, sid) for sid, s in sorted(panoptic.segments.items())]


def one_hot(class_map, num_classes):
    out = np.zeros(class_map.shape + (num_classes,))
    np.put_along_axis(out, class_map[..., None].astype(np.int64), 1.0, axis=2)
    return out
