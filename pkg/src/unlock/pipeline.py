"""Stage functions behind the CLI: each reads manifests from disk, runs one
step and writes its artifacts. Outputs depend only on inputs, config and
seed, so re-running a stage reproduces its files byte for byte."""
from __future__ import annotations

import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import manifest as mf
from .adcl import build_object_pool, spatial_aware_mix
from .config import PipelineConfig
from .errors import FormatError
from .formats import read_probs
from .fusion import fuse_outputs
from .metrics import compute_ap, compute_miou, compute_pq
from .opll import (
    collect_statistics, compute_all_thresholds, generate_omni_pseudo_label, semantic_seq_bases,
)
from .rng import MASK64, SplitMix64
from .synth import NoiseModel, SceneConfig, generate_dataset

EVAL_MODES = ("semantic", "panoptic", "amodal_panoptic", "instance", "amodal_instance")


def log(event, **fields):
    rec = {"ts": round(time.time(), 3), "event": event, **fields}
    print(json.dumps(rec, sort_keys=True), file=sys.stdout, flush=True)


def make_mapper(jobs=1):
    """Order-preserving map over images, threaded when ``jobs`` > 1."""
    if jobs <= 1:
        return lambda fn, items: list(map(fn, items))

    def mapper(fn, items):
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items))
    return mapper


def image_seed(seed, index):
    return SplitMix64((seed + index) & MASK64).next_u64()


def _relative(target, base_dir):
    return Path(os.path.relpath(Path(target).resolve(), Path(base_dir).resolve())).as_posix()


def run_synth(seed, count, out, noise=NoiseModel(), scene=SceneConfig()):
    out = Path(out)
    scenes, preds = generate_dataset(seed, count, scene, noise)
    ids = [p.image_id for p in preds]
    pred_path = mf.write_predictions(out, preds, scene.classes)
    gt_path = mf.write_ground_truth(out, scenes, ids)
    log("synth", images=count, predictions=str(pred_path), gt=str(gt_path))
    return pred_path, gt_path


def run_thresholds(manifest, cfg: PipelineConfig, out=None, jobs=1):
    classes, dataset = mf.read_predictions(manifest, load_images=False)
    stats = collect_statistics(dataset, classes.things, make_mapper(jobs))
    thresholds = compute_all_thresholds(stats, cfg.branch_params(), classes)
    if out is not None:
        mf.write_thresholds(out, thresholds, cfg)
    log("thresholds", images=len(dataset), out=str(out) if out else None,
        admitted={b: {str(c): t.admitted_count for c, t in th.classes.items()} for b, th in thresholds.items()})
    return thresholds


def run_pseudo_label(manifest, cfg: PipelineConfig, out, thresholds=None, jobs=1):
    path = mf.manifest_path(manifest, mf.PREDICTIONS)
    classes, dataset = mf.read_predictions(path)
    mapper = make_mapper(jobs)
    if thresholds is None:
        thresholds = compute_all_thresholds(collect_statistics(dataset, classes.things, mapper),
                                            cfg.branch_params(), classes)
    elif not isinstance(thresholds, dict):
        thresholds = mf.read_thresholds(thresholds)
    bases = semantic_seq_bases(dataset)
    labels = mapper(lambda a: generate_omni_pseudo_label(a[0], thresholds, classes.things, a[1]),
                    list(zip(dataset, bases)))
    doc = mf.read_json(path)
    sem_refs = [_relative(path.parent / e["semantic"], out) for e in doc["images"]]
    entries = [(p.image_id, p.image, ref, lab, None) for p, ref, lab in zip(dataset, sem_refs, labels)]
    out_path = mf.write_pseudo_labels(out, entries, classes)
    log("pseudo-label", images=len(dataset), out=str(out_path),
        certain={"instance": sum(len(lab.instance) for lab in labels),
                 "amodal": sum(len(lab.amodal) for lab in labels)})
    return out_path


def run_pool(manifest, cfg: PipelineConfig, out, jobs=1):
    classes, dataset = mf.read_predictions(manifest)
    pool = build_object_pool(dataset, (cfg.strict.fix, cfg.strict.per), cfg.capacity, classes.things,
                             make_mapper(jobs))
    path = mf.write_pool(out, pool, classes)
    log("pool", objects=len(pool), histogram={str(c): n for c, n in pool.histogram().items()}, out=str(path))
    return path


def run_mix(manifest, pool_dir, r, seed, out, jobs=1):
    classes, items = mf.read_pseudo_labels(manifest)
    pool = mf.read_pool(pool_dir)

    def mix(args):
        i, (image_id, image, sem_ref, label) = args
        if image is None:
            raise FormatError("mixing needs the base image", path=mf.manifest_path(manifest, mf.PSEUDO_LABELS),
                              field=f"images[{i}].image")
        return spatial_aware_mix(image, label, pool, r, image_seed(seed, i))

    samples = make_mapper(jobs)(mix, list(enumerate(items)))
    entries = []
    for (image_id, _, sem_ref, _), s in zip(items, samples):
        log_entries = [{"pool_index": k, "outcome": o} for k, o in s.paste_log]
        ref = _relative(sem_ref, out) if sem_ref else None
        entries.append((image_id, s.image, ref, s.labels, {"paste_log": log_entries}))
    path = mf.write_pseudo_labels(out, entries, classes, {"mix": {"R": r, "seed": seed}})
    log("mix", images=len(samples), r=r, seed=seed, out=str(path))
    return path


def _pseudo_semantic(label, sem_ref, num_classes):
    """Probabilities for fusing pseudo-labels: one-hot on certain pixels,
    the source probabilities elsewhere."""
    probs = read_probs(sem_ref) if sem_ref else np.full(label.semantic.shape + (num_classes,), 1.0 / num_classes)
    certain = label.semantic < num_classes
    probs[certain] = 0.0
    ys, xs = np.nonzero(certain)
    probs[ys, xs, label.semantic[certain].astype(np.int64)] = 1.0
    return probs


def run_fuse(manifest, confidence_floor, out, jobs=1):
    """Fuse either a prediction manifest or a pseudo-label manifest."""
    path = Path(manifest)
    if path.is_dir():
        path = path / (mf.PREDICTIONS if (path / mf.PREDICTIONS).exists() else mf.PSEUDO_LABELS)
    kind = mf.read_json(path).get("format")
    if kind == "unlock/predictions":
        classes, dataset = mf.read_predictions(path, load_images=False)
        jobs_in = [(p.image_id, p.semantic, p.instance, p.amodal) for p in dataset]
    elif kind == "unlock/pseudo-labels":
        classes, items = mf.read_pseudo_labels(path, load_images=False)
        jobs_in = [(image_id, _pseudo_semantic(lab, ref, classes.num_classes), lab.instance, lab.amodal)
                   for image_id, _, ref, lab in items]
    else:
        raise FormatError(f"cannot fuse manifest of format {kind!r}", path=path, field="format")
    results = make_mapper(jobs)(lambda a: (a[0], fuse_outputs(a[1], a[2], a[3], confidence_floor)), jobs_in)
    out_path = mf.write_fused(out, results, classes)
    log("fuse", images=len(results), source=kind, out=str(out_path))
    return out_path


def evaluate(fused, gt, classes, modes=EVAL_MODES):
    """``fused``: {id: FusionResult}; ``gt``: {id: (semantic, [GtObject])}."""
    missing = sorted(set(gt) - set(fused))
    if missing:
        raise FormatError(f"predictions missing for images {missing[:5]}", field="images")
    ids = sorted(gt)
    reports = {}
    if "semantic" in modes:
        reports["semantic"] = compute_miou([(fused[i].semantic, gt[i][0]) for i in ids], classes.num_classes)
    if "panoptic" in modes:
        reports["panoptic"] = compute_pq([(fused[i].panoptic, mf.gt_panoptic(*gt[i])) for i in ids], classes, "visible")
    if "amodal_panoptic" in modes:
        reports["amodal_panoptic"] = compute_pq([(fused[i].amodal_panoptic, mf.gt_panoptic(*gt[i])) for i in ids],
                                                classes, "amodal")
    if "instance" in modes:
        reports["instance"] = compute_ap([(fused[i].instances, [(o.cls, o.visible) for o in gt[i][1]]) for i in ids],
                                         "visible")
    if "amodal_instance" in modes:
        reports["amodal_instance"] = compute_ap(
            [(fused[i].amodal_instances, [(o.cls, o.amodal) for o in gt[i][1]]) for i in ids], "amodal")
    return reports


def format_table(reports, classes):
    names = classes.names
    cols = [k for k in EVAL_MODES if k in reports]
    head = f"{'class':<12}" + "".join(f"{reports[k].name:>8}" for k in cols)
    lines = [head, "-" * len(head)]
    for c in range(classes.num_classes):
        row = f"{names[c]:<12}"
        for k in cols:
            v = reports[k].per_class.get(c)
            row += f"{v * 100:8.1f}" if v is not None else f"{'-':>8}"
        lines.append(row)
    lines.append("-" * len(head))
    lines.append(f"{'mean':<12}" + "".join(f"{reports[k].mean * 100:8.1f}" for k in cols))
    return "\n".join(lines)


def run_eval(pred, gt, out=None, modes=EVAL_MODES):
    classes, fused = mf.read_fused(pred)
    gt_classes, gt_items = mf.read_ground_truth(gt)
    if gt_classes != classes:
        raise FormatError("class tables of predictions and ground truth differ", path=mf.manifest_path(gt, mf.GROUND_TRUTH),
                          field="classes")
    reports = evaluate(fused, gt_items, classes, modes)
    doc = {k: r.to_dict(classes.names) for k, r in reports.items()}
    doc["means_x100"] = {r.name: round(r.mean * 100, 1) for r in reports.values()}
    table = format_table(reports, classes)
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        mf.write_json(out / "report.json", doc)
        (out / "table.txt").write_text(table + "\n")
    print(table, file=sys.stderr)
    log("eval", means=doc["means_x100"], out=str(out) if out else None)
    return doc


def run_pipeline(cfg: PipelineConfig, data, out, jobs=1):
    data, out = Path(data), Path(out)
    out.mkdir(parents=True, exist_ok=True)
    preds = mf.manifest_path(data, mf.PREDICTIONS)
    gt = mf.manifest_path(data, mf.GROUND_TRUTH)
    mf.write_json(out / "config.json", cfg.to_dict())
    thresholds = run_thresholds(preds, cfg, out / mf.THRESHOLDS, jobs)
    pseudo = run_pseudo_label(preds, cfg, out / "pseudo", thresholds, jobs)
    pool = run_pool(preds, cfg, out / "pool", jobs)
    run_mix(pseudo, pool, cfg.r, cfg.seed, out / "mixed", jobs)
    fused_pred = run_fuse(preds, cfg.confidence_floor, out / "fused", jobs)
    fused_pseudo = run_fuse(pseudo, cfg.confidence_floor, out / "fused_pseudo", jobs)
    report = {
        "predictions": run_eval(fused_pred, gt, out / "eval"),
        "pseudo_labels": run_eval(fused_pseudo, gt, out / "eval_pseudo"),
    }
    final = {k: v["means_x100"] for k, v in report.items()}
    mf.write_json(out / "final_report.json", final)
    log("pipeline", final=final, out=str(out))
    return final
