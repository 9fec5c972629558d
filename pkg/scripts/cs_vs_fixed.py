"""Compare class-wise self-tuning thresholds with fixed-only thresholds on
noisy synthetic data: per-class recall and precision of the certain
instance pseudo-labels, as the rare class's score scale shrinks.

    python scripts/cs_vs_fixed.py --images 40 --seeds 3
"""
import argparse

import numpy as np

from unlock.config import PipelineConfig
from unlock.core import iou
from unlock.opll import (
    collect_statistics, compute_all_thresholds, gate_image, generate_omni_pseudo_label, semantic_seq_bases,
)
from unlock.synth import DEFAULT_CLASSES, RARE_CLASS, NoiseModel, SceneConfig, generate_dataset


def tally(objects, gts, counts):
    """Add TP/FP/GT counts per class at IoU > 0.5 (greedy by score)."""
    used = set()
    for o in sorted(objects, key=lambda o: -o.score):
        best, best_k = 0.5, None
        for k, g in enumerate(gts):
            if k not in used and g.cls == o.cls:
                v = iou(o.mask, g.visible)
                if v > best:
                    best, best_k = v, k
        c = counts.setdefault(o.cls, [0, 0, 0])
        if best_k is None:
            c[1] += 1
        else:
            used.add(best_k)
            c[0] += 1
    for g in gts:
        counts.setdefault(g.cls, [0, 0, 0])[2] += 1


def evaluate(seed, images, scale, cfg):
    noise = NoiseModel(erode=1, score_noise=0.1, spurious_rate=0.5, miss_rate=0.05, semantic_flip=0.02,
                       softness=0.2, class_score_scale={RARE_CLASS: scale})
    scenes, preds = generate_dataset(seed, images, SceneConfig(rare_prob=0.2), noise)
    things = DEFAULT_CLASSES.things
    ths = compute_all_thresholds(collect_statistics(preds, things), cfg.branch_params(), DEFAULT_CLASSES)
    cs, fixed = {}, {}
    for scene, p, base in zip(scenes, preds, semantic_seq_bases(preds)):
        label = generate_omni_pseudo_label(p, ths, things, base)
        tally(label.instance, scene.objects, cs)
        inst, _ = gate_image(p, things)
        tally([o for o in inst if o.score > cfg.instance.fix], scene.objects, fixed)
    return cs, fixed


def fmt(tp, fp, n_gt):
    rec = tp / n_gt if n_gt else float("nan")
    prec = tp / (tp + fp) if tp + fp else float("nan")
    return f"{rec:6.2f} {prec:6.2f}"


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--images", type=int, default=40)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--scales", type=float, nargs="+", default=[1.0, 0.6, 0.4, 0.25])
    args = ap.parse_args()
    cfg = PipelineConfig()
    names = DEFAULT_CLASSES.names
    print(f"{'rare scale':>10} {'class':<11} {'CS rec':>6} {'prec':>6} {'fix rec':>7} {'prec':>6}")
    for scale in args.scales:
        total_cs, total_fix = {}, {}
        for seed in range(args.seeds):
            cs, fixed = evaluate(seed, args.images, scale, cfg)
            for src, dst in ((cs, total_cs), (fixed, total_fix)):
                for c, v in src.items():
                    dst[c] = list(np.add(dst.get(c, [0, 0, 0]), v))
        for c in sorted(DEFAULT_CLASSES.things):
            a, b = total_cs.get(c, [0, 0, 0]), total_fix.get(c, [0, 0, 0])
            print(f"{scale:10.2f} {names[c]:<11} {fmt(*a)}  {fmt(*b)}")


if __name__ == "__main__":
    main()
