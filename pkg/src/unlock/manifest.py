"""JSON manifests tying the binary files of a dataset together.

Every file reference is relative to the manifest's directory. Readers
raise ``FormatError`` naming the manifest (or referenced file) and the
offending field.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .adcl import ObjectPool, PoolObject
from .core import ClassTable
from .errors import FormatError
from .formats import (
    read_json, read_mask, read_pnm, read_probs, read_segments,
    write_json, write_mask, write_pnm, write_probs, write_segments,
)
from .fusion import FusionResult, PanopticMap, Segment
from .opll import CsThresholds, ImagePredictions, InstancePrediction, OmniPseudoLabel
from .synth import GtObject, gt_panoptic  # noqa: F401

PREDICTIONS = "predictions.json"
GROUND_TRUTH = "gt.json"
PSEUDO_LABELS = "pseudo_labels.json"
THRESHOLDS = "thresholds.json"
POOL_INDEX = "index.json"
FUSED = "fused.json"


class _Ctx:
    """Field lookups that fail with the manifest path and a dotted field name."""

    def __init__(self, path, prefix=""):
        self.path = Path(path)
        self.prefix = prefix

    def sub(self, name):
        return _Ctx(self.path, f"{self.prefix}.{name}" if self.prefix else name)

    def get(self, d, key, kind=None):
        where = f"{self.prefix}.{key}" if self.prefix else key
        if not isinstance(d, dict) or key not in d:
            raise FormatError("missing field", path=self.path, field=where)
        v = d[key]
        if kind is not None:
            try:
                v = kind(v)
            except (TypeError, ValueError) as e:
                raise FormatError(f"bad value {v!r}", path=self.path, field=where) from e
        return v

    def file(self, d, key):
        return self.path.parent / self.get(d, key, str)

    def load(self, d, key, reader=None):
        """Read the file referenced by ``d[key]``; failures name the
        referenced file and this manifest's field."""
        target = self.file(d, key)
        where = f"{self.prefix}.{key}" if self.prefix else key
        try:
            return (reader or read_mask)(target)
        except FormatError as e:
            raise FormatError(f"{e.message} (referenced from {self.path})", path=target, field=where) from e


def manifest_path(p, default_name):
    p = Path(p)
    return p / default_name if p.is_dir() else p


# --- objects -------------------------------------------------------------

def _write_objects(root, stem, objects):
    out = []
    for k, o in enumerate(objects):
        rel = f"masks/{stem}_{k:03d}.ulkm"
        write_mask(root / rel, o.mask)
        out.append({"class": int(o.cls), "score": float(o.score), "mask_file": rel})
    return out


def _read_objects(ctx, entries, seq_start):
    if not isinstance(entries, list):
        raise FormatError("expected a list", path=ctx.path, field=ctx.prefix)
    objs = []
    for k, e in enumerate(entries):
        c = _Ctx(ctx.path, f"{ctx.prefix}[{k}]")
        mask = c.load(e, "mask_file")
        try:
            objs.append(InstancePrediction(c.get(e, "class", int), c.get(e, "score", float), mask, seq_start + k))
        except ValueError as err:
            raise FormatError(str(err), path=ctx.path, field=c.prefix) from err
    return objs


def _classes(ctx, doc):
    try:
        return ClassTable.from_dict(ctx.get(doc, "classes"))
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FormatError):
            raise
        raise FormatError(f"bad class table: {e}", path=ctx.path, field="classes") from e


def _images(ctx, doc):
    images = ctx.get(doc, "images")
    if not isinstance(images, list):
        raise FormatError("expected a list", path=ctx.path, field="images")
    return images


# --- predictions ---------------------------------------------------------

def write_predictions(out_dir, dataset, classes):
    root = Path(out_dir)
    for sub in ("images", "probs", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    images = []
    for p in dataset:
        entry = {"id": p.image_id, "semantic": f"probs/{p.image_id}.ulkp"}
        write_probs(root / entry["semantic"], p.semantic)
        if p.image is not None:
            entry["image"] = f"images/{p.image_id}.ppm"
            write_pnm(root / entry["image"], p.image)
        entry["instance"] = _write_objects(root, f"{p.image_id}_ins", p.instance)
        entry["amodal"] = _write_objects(root, f"{p.image_id}_ains", p.amodal)
        images.append(entry)
    path = root / PREDICTIONS
    write_json(path, {"format": "unlock/predictions", "classes": classes.to_dict(), "images": images})
    return path


def read_predictions(path, load_images=True):
    """(ClassTable, [ImagePredictions]) with object seqs numbered per branch
    in manifest order."""
    path = manifest_path(path, PREDICTIONS)
    ctx = _Ctx(path)
    doc = read_json(path)
    classes = _classes(ctx, doc)
    dataset = []
    seq = {"instance": 0, "amodal": 0}
    for i, e in enumerate(_images(ctx, doc)):
        c = ctx.sub(f"images[{i}]")
        sem = c.load(e, "semantic", read_probs)
        if sem.shape[2] != classes.num_classes:
            raise FormatError(f"{sem.shape[2]} probability planes for {classes.num_classes} classes",
                              path=c.file(e, "semantic"), field="C")
        image = c.load(e, "image", read_pnm) if load_images and "image" in e else None
        branches = {}
        for b in ("instance", "amodal"):
            branches[b] = _read_objects(c.sub(b), e.get(b, []), seq[b])
            seq[b] += len(branches[b])
            for o in branches[b]:
                if o.mask.shape != sem.shape[:2]:
                    raise FormatError("mask size differs from semantic grid", path=path, field=f"{c.prefix}.{b}")
                if o.cls not in classes.things:
                    raise FormatError(f"class {o.cls} is not a thing class", path=path, field=f"{c.prefix}.{b}")
        dataset.append(ImagePredictions(c.get(e, "id", str), sem, branches["instance"], branches["amodal"], image))
    return classes, dataset


# --- ground truth --------------------------------------------------------

def write_ground_truth(out_dir, scenes, ids):
    root = Path(out_dir)
    for sub in ("images", "gt"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    images = []
    for scene, image_id in zip(scenes, ids):
        entry = {"id": image_id, "image": f"images/{image_id}.ppm", "semantic_file": f"gt/{image_id}_sem.pgm"}
        write_pnm(root / entry["image"], scene.image)
        write_pnm(root / entry["semantic_file"], scene.semantic.astype(np.uint8))
        objs = []
        for k, o in enumerate(scene.objects):
            vis, amo = f"gt/{image_id}_{k:03d}_vis.ulkm", f"gt/{image_id}_{k:03d}_amo.ulkm"
            write_mask(root / vis, o.visible)
            write_mask(root / amo, o.amodal)
            objs.append({"class": int(o.cls), "depth": int(o.depth), "visible_mask_file": vis, "amodal_mask_file": amo})
        entry["objects"] = objs
        images.append(entry)
    path = root / GROUND_TRUTH
    write_json(path, {"format": "unlock/gt", "classes": scenes[0].classes.to_dict() if scenes else {"names": [], "things": []},
                      "images": images})
    return path


def read_ground_truth(path):
    """(ClassTable, {image id: (semantic map, [GtObject])})."""
    path = manifest_path(path, GROUND_TRUTH)
    ctx = _Ctx(path)
    doc = read_json(path)
    classes = _classes(ctx, doc)
    out = {}
    for i, e in enumerate(_images(ctx, doc)):
        c = ctx.sub(f"images[{i}]")
        sem = c.load(e, "semantic_file", read_pnm)
        objs = []
        for k, o in enumerate(c.get(e, "objects")):
            oc = c.sub(f"objects[{k}]")
            objs.append(GtObject(oc.get(o, "class", int), oc.load(o, "amodal_mask_file"),
                                 oc.load(o, "visible_mask_file"), oc.get(o, "depth", int)))
        out[c.get(e, "id", str)] = (sem, objs)
    return classes, out


# --- thresholds ----------------------------------------------------------

def write_thresholds(path, thresholds, config):
    doc = {
        "inputs": config.to_dict()["thresholds"],
        "branches": {b: th.to_dict() for b, th in sorted(thresholds.items())},
    }
    write_json(path, doc)


def read_thresholds(path):
    path = Path(path)
    ctx = _Ctx(path)
    doc = read_json(path)
    try:
        return {b: CsThresholds.from_dict(d) for b, d in ctx.get(doc, "branches").items()}
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"bad threshold entry: {e}", path=path, field="branches") from e


# --- pseudo labels -------------------------------------------------------

def write_pseudo_labels(out_dir, entries, classes, extra=None):
    """``entries``: list of (image id, image array or None, semantic-probs
    reference or None, OmniPseudoLabel, per-image extras dict)."""
    root = Path(out_dir)
    for sub in ("images", "masks", "labels"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    images = []
    for image_id, image, sem_ref, label, more in entries:
        e = {"id": image_id}
        if image is not None:
            e["image"] = f"images/{image_id}.ppm"
            write_pnm(root / e["image"], image)
        if sem_ref is not None:
            e["semantic"] = sem_ref
        e["instance"] = _write_objects(root, f"{image_id}_ins", label.instance)
        e["amodal"] = _write_objects(root, f"{image_id}_ains", label.amodal)
        e["instance_uncertain_file"] = f"masks/{image_id}_ins_uncertain.ulkm"
        e["amodal_uncertain_file"] = f"masks/{image_id}_ains_uncertain.ulkm"
        e["semantic_label_file"] = f"labels/{image_id}_sem.pgm"
        write_mask(root / e["instance_uncertain_file"], label.instance_uncertain)
        write_mask(root / e["amodal_uncertain_file"], label.amodal_uncertain)
        write_pnm(root / e["semantic_label_file"], label.semantic)
        e.update(more or {})
        images.append(e)
    doc = {"format": "unlock/pseudo-labels", "classes": classes.to_dict(), "images": images}
    doc.update(extra or {})
    path = root / PSEUDO_LABELS
    write_json(path, doc)
    return path


def read_pseudo_labels(path, load_images=True):
    """(ClassTable, [(image id, image, semantic probs path or None, OmniPseudoLabel)])."""
    path = manifest_path(path, PSEUDO_LABELS)
    ctx = _Ctx(path)
    doc = read_json(path)
    classes = _classes(ctx, doc)
    out = []
    seq = {"instance": 0, "amodal": 0}
    for i, e in enumerate(_images(ctx, doc)):
        c = ctx.sub(f"images[{i}]")
        sem_label = c.load(e, "semantic_label_file", read_pnm)
        lists = {}
        for b in ("instance", "amodal"):
            lists[b] = _read_objects(c.sub(b), e.get(b, []), seq[b])
            seq[b] += len(lists[b])
        label = OmniPseudoLabel(
            instance=lists["instance"],
            instance_uncertain=c.load(e, "instance_uncertain_file"),
            amodal=lists["amodal"],
            amodal_uncertain=c.load(e, "amodal_uncertain_file"),
            semantic=sem_label,
        )
        image = c.load(e, "image", read_pnm) if load_images and "image" in e else None
        sem_ref = c.file(e, "semantic") if "semantic" in e else None
        out.append((c.get(e, "id", str), image, sem_ref, label))
    return classes, out


# --- object pool ---------------------------------------------------------

def write_pool(out_dir, pool: ObjectPool, classes):
    root = Path(out_dir)
    (root / "objects").mkdir(parents=True, exist_ok=True)
    entries = []
    for k, o in enumerate(pool.objects):
        stem = f"objects/{k:05d}"
        ext = "ppm" if o.pixels.ndim == 3 else "pgm"
        entry = {
            "class": int(o.cls),
            "score": float(o.score),
            "full_mask_file": f"{stem}_full.ulkm",
            "overlap_mask_file": f"{stem}_ovp.ulkm",
            "pixels_file": f"{stem}_pixels.{ext}",
            "offset": list(o.offset),
            "source_image_id": o.source_image_id,
        }
        write_mask(root / entry["full_mask_file"], o.full_mask)
        write_mask(root / entry["overlap_mask_file"], o.overlap_mask)
        write_pnm(root / entry["pixels_file"], o.pixels)
        entries.append(entry)
    path = root / POOL_INDEX
    write_json(path, {"format": "unlock/pool", "classes": classes.to_dict(), "histogram":
                      {str(c): n for c, n in pool.histogram().items()}, "objects": entries})
    return path


def read_pool(path) -> ObjectPool:
    path = manifest_path(path, POOL_INDEX)
    ctx = _Ctx(path)
    doc = read_json(path)
    objs = []
    for k, e in enumerate(ctx.get(doc, "objects")):
        c = ctx.sub(f"objects[{k}]")
        offset = c.get(e, "offset")
        objs.append(PoolObject(
            c.get(e, "class", int), c.get(e, "score", float),
            c.load(e, "full_mask_file"), c.load(e, "overlap_mask_file"),
            c.load(e, "pixels_file", read_pnm), (int(offset[0]), int(offset[1])),
            c.get(e, "source_image_id", str),
        ))
    return ObjectPool(objs)


# --- fused outputs -------------------------------------------------------

def write_fused(out_dir, results, classes):
    """``results``: list of (image id, FusionResult)."""
    root = Path(out_dir)
    for sub in ("panoptic", "masks", "semantic"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    images = []
    for image_id, res in results:
        h, w = res.semantic.shape
        e = {"id": image_id, "height": h, "width": w,
             "semantic_file": f"semantic/{image_id}.pgm",
             "segments_file": f"panoptic/{image_id}.seg"}
        write_pnm(root / e["semantic_file"], res.semantic.astype(np.uint8))
        write_segments(root / e["segments_file"], res.panoptic.segment_map)
        segs = []
        for sid, s in sorted(res.amodal_panoptic.segments.items()):
            rel = f"panoptic/{image_id}_{sid:04d}_amodal.ulkm"
            write_mask(root / rel, s.amodal)
            segs.append({"id": sid, "class": int(s.cls), "score": float(s.score), "amodal_mask_file": rel})
        e["segments"] = segs
        e["instance"] = _write_objects(root, f"{image_id}_ins", res.instances)
        e["amodal"] = _write_objects(root, f"{image_id}_ains", res.amodal_instances)
        images.append(e)
    path = root / FUSED
    write_json(path, {"format": "unlock/fused", "classes": classes.to_dict(), "images": images})
    return path


def read_fused(path):
    """(ClassTable, {image id: FusionResult})."""
    path = manifest_path(path, FUSED)
    ctx = _Ctx(path)
    doc = read_json(path)
    classes = _classes(ctx, doc)
    out = {}
    for i, e in enumerate(_images(ctx, doc)):
        c = ctx.sub(f"images[{i}]")
        h, w = c.get(e, "height", int), c.get(e, "width", int)
        sem = c.load(e, "semantic_file", read_pnm).astype(np.int64)
        seg_map = c.load(e, "segments_file", lambda f: read_segments(f, h, w))
        segs, amodal_segs = {}, {}
        for k, s in enumerate(c.get(e, "segments")):
            sc = c.sub(f"segments[{k}]")
            sid = sc.get(s, "id", int)
            vis = seg_map == sid
            segs[sid] = Segment(sc.get(s, "class", int), vis, sc.get(s, "score", float))
            amodal_segs[sid] = Segment(segs[sid].cls, vis, segs[sid].score, sc.load(s, "amodal_mask_file"))
        pan = PanopticMap(sem, seg_map, segs)
        apan = PanopticMap(sem, seg_map, amodal_segs)
        inst = _read_objects(c.sub("instance"), e.get("instance", []), 0)
        amod = _read_objects(c.sub("amodal"), e.get("amodal", []), 0)
        out[c.get(e, "id", str)] = FusionResult(sem, inst, amod, pan, apan)
    return classes, out
