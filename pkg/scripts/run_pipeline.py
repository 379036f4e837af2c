#!/usr/bin/env python3
"""End-to-end desk-scale experiment: synthesize cases, train per fold,
evaluate on the held-out sea states, and collect the figure-ready CSVs.

Equivalent to running the CLI subcommands in order; kept as one script so a
fresh checkout can reproduce the whole study with a single command:

    python3 scripts/run_pipeline.py --out runs/desk
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
    for step in (
        ["synth", *base],
        ["train", *base, "-O", f"m_list={args.m_list}"],
        ["eval", *base, "-O", f"m_list={args.m_list}"],
    ):
        code = heavecast_main(step)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/desk")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--m-list", default="20,40,80", dest="m_list")
    parser.add_argument("--full-scale", dest="desk", action="store_false",
                        help="use the full-scale configuration instead of the desk profile")
    parser.add_argument("--force", action="store_true")
    sys.exit(run(parser.parse_args()))
