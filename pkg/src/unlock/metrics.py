"""mIoU, PQ / APQ and AP / AAP.

All functions take a sequence of per-image (prediction, ground truth)
pairs and reduce per-class statistics over the whole set. Values are in
[0, 1]; the CLI multiplies by 100 for display.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import IGNORE
from .errors import DimensionMismatch

AP_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass
class MetricReport:
    name: str
    per_class: dict[int, float] = field(default_factory=dict)
    mean: float = 0.0
    counts: dict[int, dict[str, int]] = field(default_factory=dict)

    def to_dict(self, names=None):
        label = (lambda c: names[c]) if names else str
        return {
            "name": self.name,
            "mean": self.mean,
            "per_class": {label(c): v for c, v in sorted(self.per_class.items())},
            "counts": {label(c): v for c, v in sorted(self.counts.items())},
        }


def _mean(values):
    return float(np.mean(values)) if values else 0.0


def compute_miou(pairs, num_classes, ignore=IGNORE) -> MetricReport:
    """``pairs`` of (pred class map, gt class map). Pred values outside
    [0, num_classes) count as misses for the GT class."""
    conf = np.zeros((num_classes + 1, num_classes + 1), dtype=np.int64)
    for pred, gt in pairs:
        pred = np.asarray(pred).astype(np.int64)
        gt = np.asarray(gt).astype(np.int64)
        if pred.shape != gt.shape:
            raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
        keep = gt != ignore
        g = gt[keep]
        p = pred[keep]
        p = np.where((p >= 0) & (p < num_classes), p, num_classes)
        conf += np.bincount(g * (num_classes + 1) + p, minlength=(num_classes + 1) ** 2).reshape(conf.shape)
    tp = np.diag(conf)[:num_classes]
    gt_count = conf[:num_classes].sum(axis=1)
    pred_count = conf[:, :num_classes].sum(axis=0)
    report = MetricReport("mIoU")
    for c in range(num_classes):
        denom = gt_count[c] + pred_count[c] - tp[c]
        if denom == 0:
            continue
        report.per_class[c] = tp[c] / denom
        report.counts[c] = {"TP": int(tp[c]), "FP": int(pred_count[c] - tp[c]), "FN": int(gt_count[c] - tp[c])}
    present = [report.per_class[c] for c in range(num_classes) if gt_count[c] > 0]
    report.mean = _mean(present)
    return report


def panoptic_segments(pan, classes, mode="visible"):
    """(class, mask) list: one segment per stuff class present, plus every
    thing segment (amodal mask in amodal mode)."""
    out = []
    cmap = pan.class_map
    for c in sorted(classes.stuff):
        m = cmap == c
        if m.any():
            out.append((c, m))
    for sid in sorted(pan.segments):
        s = pan.segments[sid]
        if mode == "amodal" and s.cls in classes.things and s.amodal is not None:
            out.append((s.cls, s.amodal))
        else:
            out.append((s.cls, s.visible))
    return out


def overlap_counts(a_masks, b_masks):
    """Pixel counts (intersection, union), each shaped (len(a), len(b))."""
    if not a_masks or not b_masks:
        z = np.zeros((len(a_masks), len(b_masks)), dtype=np.int64)
        return z, z.copy()
    a = np.stack([m.ravel() for m in a_masks]).astype(np.int64)
    b = np.stack([m.ravel() for m in b_masks]).astype(np.int64)
    inter = a @ b.T
    uni = a.sum(1)[:, None] + b.sum(1)[None, :] - inter
    return inter, uni


def iou_matrix(a_masks, b_masks):
    inter, uni = overlap_counts(a_masks, b_masks)
    return np.where(uni > 0, inter / np.maximum(uni, 1), 0.0)


def match_segments(pred_masks, gt_masks):
    """Pairs with IoU > 0.5 maximizing the matched-IoU sum.

    For pairwise-disjoint segments at most one partner per segment can
    exceed 0.5, so this is the usual unique match; for overlapping amodal
    masks it is the best assignment. Returns [(pred idx, gt idx, iou)]
    with the IoU as an exact fraction.
    """
    inter, uni = overlap_counts(pred_masks, gt_masks)
    if inter.size == 0:
        return []
    # 2 * inter > uni is IoU > 1/2 without rounding
    passing = 2 * inter > uni
    weight = np.where(passing, inter / np.maximum(uni, 1), 0.0)
    rows, cols = linear_sum_assignment(weight, maximize=True)
    return [(int(i), int(j), Fraction(int(inter[i, j]), int(uni[i, j])))
            for i, j in zip(rows, cols) if passing[i, j]]


def compute_pq(pairs, classes, mode="visible") -> MetricReport:
    """``pairs`` of (pred PanopticMap, gt PanopticMap)."""
    if mode not in ("visible", "amodal"):
        raise ValueError(f"unknown mode {mode!r}")
    # exact sums so the result does not depend on image order
    iou_sum = defaultdict(Fraction)
    tp, fp, fn = defaultdict(int), defaultdict(int), defaultdict(int)
    for pred, gt in pairs:
        if pred.shape != gt.shape:
            raise DimensionMismatch(f"pred {pred.shape} vs gt {gt.shape}")
        ps = panoptic_segments(pred, classes, mode)
        gs = panoptic_segments(gt, classes, mode)
        for c in {c for c, _ in ps} | {c for c, _ in gs}:
            pm = [m for k, m in ps if k == c]
            gm = [m for k, m in gs if k == c]
            matches = match_segments(pm, gm)
            tp[c] += len(matches)
            fp[c] += len(pm) - len(matches)
            fn[c] += len(gm) - len(matches)
            iou_sum[c] += sum(v for _, _, v in matches)
    report = MetricReport("mAPQ" if mode == "amodal" else "mPQ")
    for c in sorted(set(tp) | set(fp) | set(fn)):
        denom = tp[c] + 0.5 * fp[c] + 0.5 * fn[c]
        if denom == 0:
            continue
        report.per_class[c] = float(iou_sum[c] / Fraction(2 * tp[c] + fp[c] + fn[c], 2))
        report.counts[c] = {"TP": tp[c], "FP": fp[c], "FN": fn[c]}
    report.mean = _mean(list(report.per_class.values()))
    return report


def average_precision(tp_flags, n_gt):
    """All-point interpolated area under the precision/recall curve."""
    if n_gt == 0:
        return 0.0
    if len(tp_flags) == 0:
        return 0.0
    tps = np.cumsum(tp_flags)
    precision = tps / np.arange(1, len(tp_flags) + 1)
    recall = tps / n_gt
    # monotone envelope from the right
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    prev = np.concatenate(([0.0], recall[:-1]))
    return float(np.sum((recall - prev) * envelope))


def compute_ap(pairs, mode="visible", thresholds=AP_IOU_THRESHOLDS) -> MetricReport:
    """``pairs`` of (predictions, ground truth) per image; predictions are
    objects with ``cls``, ``score``, ``mask``; ground truth is a list of
    (cls, mask). Callers pass amodal masks on both sides for AAP."""
    preds_by_cls = defaultdict(list)  # cls -> [(score, img, idx, mask)]
    gts_by_cls = defaultdict(lambda: defaultdict(list))  # cls -> img -> [mask]
    for img, (preds, gts) in enumerate(pairs):
        for k, p in enumerate(preds):
            preds_by_cls[p.cls].append((p.score, img, k, p.mask))
        for c, m in gts:
            gts_by_cls[c][img].append(m)
    report = MetricReport("mAAP" if mode == "amodal" else "mAP")
    for c in sorted(gts_by_cls):
        n_gt = sum(len(v) for v in gts_by_cls[c].values())
        ranked = sorted(preds_by_cls.get(c, []), key=lambda t: (-t[0], t[1], t[2]))
        ious = []
        for _, img, _, mask in ranked:
            gm = gts_by_cls[c].get(img, [])
            ious.append(iou_matrix([mask], gm)[0] if gm else np.zeros(0))
        aps = []
        tp_total = 0
        for t in thresholds:
            used = defaultdict(set)
            flags = np.zeros(len(ranked))
            for r, (_, img, _, _) in enumerate(ranked):
                row = ious[r]
                best, best_j = -1.0, -1
                for j, v in enumerate(row):
                    if j not in used[img] and v >= t and v > best:
                        best, best_j = v, j
                if best_j >= 0:
                    used[img].add(best_j)
                    flags[r] = 1
            aps.append(average_precision(flags, n_gt))
            if t == thresholds[0]:
                tp_total = int(flags.sum())
        report.per_class[c] = float(np.mean(aps))
        report.counts[c] = {"TP": tp_total, "FP": len(ranked) - tp_total, "FN": n_gt - tp_total}
    report.mean = _mean(list(report.per_class.values()))
    return report
