#!/usr/bin/env python3
"""Noise-robustness study: train forecasters at several input-noise levels,
then sweep the test-time noise grid and tabulate mean/std EV per cell.

    python3 scripts/run_noise_study.py --out runs/noise
"""

import argparse
import sys

from heavecast.cli import main as heavecast_main


def run(args) -> int:
    base = ["--out", args.out, "--seed", str(args.seed)]
    if args.desk:
        base.append("--desk-profile")
    if args.force:
        base.append("--force")
    code = heavecast_main(["synth", *base])
    if code != 0:
        return code
    levels = [float(v) for v in args.train_levels.split(",")]
    for i, level in enumerate(levels):
        step = ["train", *base, "-O", f"train_noise_level={level}"]
        if i > 0:
            step.append("--force")  # models/ already holds earlier levels
        code = heavecast_main(step)
        if code != 0:
            return code
    return heavecast_main(["noise-sweep", *base, "-O", f"train_noise_levels={args.train_levels}"])


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/noise")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train-levels", default="0.0,0.2,0.6", dest="train_levels")
    parser.add_argument("--full-scale", dest="desk", action="store_false")
    parser.add_argument("--force", action="store_true")
    sys.exit(run(parser.parse_args()))
