"""``unlock`` command line.

Exit codes: 0 ok, 1 malformed manifest or missing file, 2 bad config or
arguments.
"""
from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import pipeline as pl
from .config import load_config
from .errors import ConfigInvalid, FormatError
from .synth import NoiseModel, SceneConfig

NOISE_PRESETS = {
    "zero": NoiseModel(),
    "mild": NoiseModel(erode=1, score_noise=0.1, spurious_rate=0.5, miss_rate=0.05,
                       semantic_flip=0.02, softness=0.2, class_score_scale={6: 0.25}),
}


def _jobs_default():
    try:
        return max(1, int(os.environ.get("UNLOCK_JOBS", "1")))
    except ValueError:
        return 1


def _add_config_args(p, thresholds=True):
    p.add_argument("--config", help="pipeline config JSON (defaults are built in)")
    if thresholds:
        for b in ("amodal", "instance", "semantic"):
            p.add_argument(f"--{b}-fix", type=float, dest=f"{b}_fix")
            p.add_argument(f"--{b}-per", type=float, dest=f"{b}_per")


def build_parser():
    parser = argparse.ArgumentParser(prog="unlock", description="pseudo-labels, object-pool mixing, fusion and metrics for amodal panoptic adaptation")
    parser.add_argument("--jobs", type=int, default=_jobs_default(), help="worker threads (env UNLOCK_JOBS)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic scenes, ground truth and predictions")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", choices=sorted(NOISE_PRESETS), default="mild")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--min-rare", type=int, dest="min_rare")

    p = sub.add_parser("thresholds", help="compute CS thresholds for every branch")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out")
    _add_config_args(p)

    p = sub.add_parser("pseudo-label", help="generate omni pseudo-labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--thresholds", help="thresholds JSON; computed from the manifest when omitted")
    p.add_argument("--out", required=True)
    _add_config_args(p)

    p = sub.add_parser("pool", help="amodal object pool")
    pool_sub = p.add_subparsers(dest="pool_command", required=True)
    b = pool_sub.add_parser("build")
    b.add_argument("--manifest", required=True)
    b.add_argument("--fix", type=float)
    b.add_argument("--per", type=float)
    b.add_argument("--capacity", type=int)
    b.add_argument("--out", required=True)
    _add_config_args(b, thresholds=False)

    p = sub.add_parser("mix", help="spatial-aware mixing of pool objects into pseudo-labelled images")
    p.add_argument("--manifest", required=True, help="pseudo-label manifest")
    p.add_argument("--pool", required=True)
    p.add_argument("--r", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    _add_config_args(p, thresholds=False)

    p = sub.add_parser("fuse", help="fuse branch outputs into the five segmentation products")
    p.add_argument("--manifest", required=True, help="prediction or pseudo-label manifest")
    p.add_argument("--confidence-floor", type=float, dest="confidence_floor")
    p.add_argument("--out", required=True)
    _add_config_args(p, thresholds=False)

    p = sub.add_parser("eval", help="evaluate fused outputs against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mode", default="all", choices=("all",) + pl.EVAL_MODES)
    p.add_argument("--out")

    p = sub.add_parser("pipeline", help="thresholds, pseudo-labels, pool, mix, fuse and eval in one go")
    p.add_argument("--data", required=True, help="directory with predictions.json and gt.json")
    p.add_argument("--out")
    _add_config_args(p)
    return parser


def _config(args):
    cfg = load_config(getattr(args, "config", None))
    kw = {k: getattr(args, k, None) for k in
          ("amodal_fix", "amodal_per", "instance_fix", "instance_per", "semantic_fix", "semantic_per")}
    return cfg.override(**kw)


def run(args):
    jobs = args.jobs
    if jobs < 1:
        raise ConfigInvalid("--jobs must be >= 1")
    cmd = args.command
    if cmd == "synth":
        if args.count < 0:
            raise ConfigInvalid("--count must be >= 0")
        scene = SceneConfig()
        changes = {k: getattr(args, k) for k in ("height", "width", "min_rare") if getattr(args, k) is not None}
        scene = replace(scene, **changes)
        scene.validate()
        pl.run_synth(args.seed, args.count, args.out, NOISE_PRESETS[args.noise], scene)
    elif cmd == "thresholds":
        out = args.out
        th = pl.run_thresholds(args.manifest, _config(args), out, jobs)
        if out is None:
            import json
            print(json.dumps({b: t.to_dict() for b, t in th.items()}, sort_keys=True))
    elif cmd == "pseudo-label":
        pl.run_pseudo_label(args.manifest, _config(args), args.out, args.thresholds, jobs)
    elif cmd == "pool":
        cfg = load_config(args.config).override(strict_fix=args.fix, strict_per=args.per, capacity=args.capacity)
        pl.run_pool(args.manifest, cfg, args.out, jobs)
    elif cmd == "mix":
        cfg = load_config(args.config).override(r=args.r, seed=args.seed)
        pl.run_mix(args.manifest, args.pool, cfg.r, cfg.seed, args.out, jobs)
    elif cmd == "fuse":
        cfg = load_config(args.config).override(confidence_floor=args.confidence_floor)
        pl.run_fuse(args.manifest, cfg.confidence_floor, args.out, jobs)
    elif cmd == "eval":
        modes = pl.EVAL_MODES if args.mode == "all" else (args.mode,)
        pl.run_eval(args.pred, args.gt, args.out, modes)
    elif cmd == "pipeline":
        out = args.out or os.path.join(args.data, "pipeline")
        pl.run_pipeline(_config(args), args.data, out, jobs)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except FormatError as e:
        pl.log("error", kind="format", message=str(e), path=e.path, field=e.field)
        print(f"unlock: error: {e}", file=sys.stderr)
        return 1
    except ConfigInvalid as e:
        pl.log("error", kind="config", message=str(e))
        print(f"unlock: config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
