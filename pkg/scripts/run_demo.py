"""End-to-end demo: generate a noisy synthetic dataset, run thresholds,
pseudo-labels, pool building, mixing, fusion and evaluation, then print
the final report for raw predictions and for fused pseudo-labels.

    python scripts/run_demo.py --out /tmp/unlock-demo --images 20
"""
import argparse
import json
from pathlib import Path

from unlock.cli import NOISE_PRESETS
from unlock.config import load_config
from unlock.pipeline import run_pipeline, run_synth
from unlock.synth import SceneConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", required=True)
    ap.add_argument("--images", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--noise", choices=sorted(NOISE_PRESETS), default="mild")
    ap.add_argument("--config", help="pipeline config JSON")
    ap.add_argument("--jobs", type=int, default=1)
    args = ap.parse_args()
    out = Path(args.out)
    run_synth(args.seed, args.images, out / "data", NOISE_PRESETS[args.noise], SceneConfig())
    final = run_pipeline(load_config(args.config), out / "data", out / "run", args.jobs)
    print(json.dumps(final, indent=2))


if __name__ == "__main__":
    main()
