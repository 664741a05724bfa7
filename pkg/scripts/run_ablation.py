#!/usr/bin/env python3
"""Desk-scale ablation grid on synthetic data.

Sweeps gate type, focal parameter, loss, short skips and deep supervision
with k-fold cross-validation and writes a mean +/- std summary table. The
full grid is expensive; the default here covers the headline comparison
(plain vs attention vs focus gate, both losses) on a small dataset.

    python3 scripts/run_ablation.py --out runs/ablation
"""

import argparse
import sys
from pathlib import Path

from focus_unet.cli import main as cli


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/ablation")
    parser.add_argument("--n", type=int, default=60)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--folds", type=int, default=3)
    parser.add_argument("--lambdas", default="1,1.25,2")
    parser.add_argument("--threads", type=int, default=0)
    args = parser.parse_args(argv)

    out = Path(args.out)
    data_dir = out / "data"
    steps = [
        ["synth", "--n", str(args.n), "--height", "32", "--width", "32",
         "--seed", "77", "--out-dir", str(data_dir)],
        ["ablate", "--data-dir", str(data_dir), "--out-dir", str(out / "grid"),
         "--depth", "3", "--base-channels", "4", "--height", "32", "--width", "32",
         "--epochs", str(args.epochs), "--batch-size", "8",
         "--kfold-k", str(args.folds), "--threads", str(args.threads),
         "--grid-gates", "none,additive,focus",
         "--grid-lambdas", args.lambdas,
         "--grid-losses", "dice_ce,hybrid_focal",
         "--grid-short-skips", "true",
         "--grid-deep-supervision", "true"],
    ]
    for step in steps:
        print(f"\n$ focus-unet {' '.join(step)}")
        code = cli(step)
        if code != 0:
            return code
    print(f"\nsummary table: {out / 'grid' / 'ablation.csv'}")
    return 0


if __name__ == "__main__":
    sys.exit(run())
